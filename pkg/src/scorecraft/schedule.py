"""Samplers and schedules that drive the optimisation loop."""

import numpy as np

from .camera import Camera
from .config import CameraConfig

PHASES = ("neus", "dmtet-geometry", "texture")


def timestep_bounds(progress, start=(0.7, 0.85), end=(0.2, 0.5)):
    p = min(max(float(progress), 0.0), 1.0)
    lo = start[0] + p * (end[0] - start[0])
    hi = start[1] + p * (end[1] - start[1])
    return lo, hi


def sample_timestep(progress, rng, start=(0.7, 0.85), end=(0.2, 0.5)):
    """Uniform draw between linearly annealed bounds; progress past 1 stays at ``end``."""
    if not np.isfinite(progress) or progress < 0.0:
        raise ValueError(f"progress must be a non-negative number, got {progress}")
    lo, hi = timestep_bounds(progress, start, end)
    return float(rng.uniform(lo, hi))


def view_range(progress, cfg=CameraConfig()):
    """Half-width in degrees of the azimuth window around the reference view."""
    frac = min(max(float(progress), 0.0) / cfg.view_warmup, 1.0)
    return cfg.view_start + frac * (cfg.view_end - cfg.view_start)


def _light_position(cam_dir, angle, spin, distance):
    ref = np.array([0.0, 0.0, 1.0]) if abs(cam_dir[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(cam_dir, ref)
    u /= np.linalg.norm(u)
    v = np.cross(cam_dir, u)
    d = np.cos(angle) * cam_dir + np.sin(angle) * (np.cos(spin) * u + np.sin(spin) * v)
    return distance * d


def sample_camera(phase, progress, rng, reference, cfg=CameraConfig(), size=None):
    """Draw a training camera.

    Azimuth is uniform within ``view_range(progress)`` of the reference,
    elevation uniform in the configured band. In the geometry phases the
    intrinsics are pinned to the defaults with probability
    ``cfg.fixed_probability``, otherwise distance and FOV are drawn from their
    ranges; the texture phase always uses the defaults. The point light sits at
    a random angular distance from the camera direction and a random range.
    Every call consumes the same number of draws.
    """
    if phase not in PHASES:
        raise ValueError(f"unknown phase {phase!r}")
    size = size or reference.width
    half = view_range(progress, cfg)
    u = rng.random(8)
    azimuth = reference.azimuth + (2.0 * u[0] - 1.0) * half
    elevation = cfg.elevation_range[0] + u[1] * (cfg.elevation_range[1] - cfg.elevation_range[0])
    fixed = phase == "texture" or u[2] < cfg.fixed_probability
    if fixed:
        distance, fov = cfg.default_distance, cfg.default_fov
    else:
        distance = cfg.distance_range[0] + u[3] * (cfg.distance_range[1] - cfg.distance_range[0])
        fov = cfg.fov_range[0] + u[4] * (cfg.fov_range[1] - cfg.fov_range[0])
    angle = u[5] * cfg.light_angle_max
    light_dist = cfg.light_distance_range[0] + u[6] * (cfg.light_distance_range[1] - cfg.light_distance_range[0])
    spin = 2.0 * np.pi * u[7]
    a, e = np.radians(azimuth), np.radians(elevation)
    cam_dir = np.array([np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e)])
    light = _light_position(cam_dir, angle, spin, light_dist)
    return Camera.orbit(azimuth, elevation, distance, fov, size, fixed_intrinsics=bool(fixed),
                        light=tuple(float(x) for x in light))


def light_angle(camera):
    """Angle between the light position and the camera position, seen from the origin."""
    p = np.asarray(camera.position) / np.linalg.norm(camera.position)
    q = np.asarray(camera.light) / np.linalg.norm(camera.light)
    return float(np.arccos(np.clip(p @ q, -1.0, 1.0)))


def steepness(iteration, start=16.0, end=256.0, double_every=50):
    """Logistic steepness doubling every ``double_every`` iterations, capped at ``end``."""
    return float(min(end, start * 2.0 ** (iteration // double_every)))


class Adam:
    """Adam with per-group step sizes and in-place updates.

    ``m = b1 m + (1 - b1) g``, ``v = b2 v + (1 - b2) g^2`` and
    ``p -= lr * m_hat / (sqrt(v_hat) + eps)`` with bias-corrected moments. Each
    group counts its own steps so frozen groups start fresh when released.
    """

    def __init__(self, lrs, betas=(0.9, 0.99), eps=1e-8):
        self.lrs = [float(x) for x in lrs]
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [None] * len(self.lrs)
        self.v = [None] * len(self.lrs)
        self.t = [0] * len(self.lrs)

    def step(self, params, grads, active=None):
        for i, (p, g) in enumerate(zip(params, grads)):
            if g is None or (active is not None and not active[i]):
                continue
            if self.m[i] is None:
                self.m[i] = np.zeros_like(p)
                self.v[i] = np.zeros_like(p)
            self.t[i] += 1
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g
            mh = self.m[i] / (1.0 - self.b1 ** self.t[i])
            vh = self.v[i] / (1.0 - self.b2 ** self.t[i])
            p -= self.lrs[i] * mh / (np.sqrt(vh) + self.eps)
