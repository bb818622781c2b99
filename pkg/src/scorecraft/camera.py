"""Pinhole cameras and per-pixel rays.

World frame is z-up. A camera at azimuth ``a`` and elevation ``e`` (degrees)
and distance ``d`` sits at ``d * (cos e cos a, cos e sin a, sin e)`` looking at
the origin, so azimuth 0 views the object from +x.

Pixel (row i, column j) of an H x W image maps to image-plane coordinates::

    x = (2 (j + 0.5) / W - 1) * tan(fov / 2) * W / H
    y = (1 - 2 (i + 0.5) / H) * tan(fov / 2)

with ``fov`` the vertical field of view; the ray direction is the normalised
``forward + x * right + y * up``.
"""

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class Camera:
    position: tuple
    target: tuple = (0.0, 0.0, 0.0)
    up: tuple = (0.0, 0.0, 1.0)
    fov: float = 20.0
    width: int = 32
    height: int = 32
    azimuth: float = 0.0
    elevation: float = 0.0
    distance: float = 0.0
    fixed_intrinsics: bool = True
    light: tuple = field(default=(0.0, 0.0, 0.0))

    def __post_init__(self):
        if not 0.0 < self.fov < 180.0:
            raise ValueError(f"field of view must lie in (0, 180) degrees, got {self.fov}")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be positive")
        pos = np.asarray(self.position, dtype=np.float64)
        tgt = np.asarray(self.target, dtype=np.float64)
        if np.allclose(pos, tgt):
            raise ValueError("camera position coincides with its target")
        fwd = (tgt - pos) / np.linalg.norm(tgt - pos)
        if np.linalg.norm(np.cross(np.asarray(self.up, dtype=np.float64), fwd)) <= 1e-9:
            raise ValueError("up vector is parallel to the viewing direction")

    @classmethod
    def orbit(cls, azimuth, elevation, distance, fov=20.0, size=32, **kw):
        a, e = np.radians(azimuth), np.radians(elevation)
        pos = distance * np.array([np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e)])
        return cls(position=tuple(float(x) for x in pos), fov=float(fov), width=int(size),
                   height=int(size), azimuth=float(azimuth), elevation=float(elevation),
                   distance=float(distance), **kw)

    def resized(self, size):
        return replace(self, width=int(size), height=int(size))

    def basis(self):
        pos = np.asarray(self.position, dtype=np.float64)
        fwd = np.asarray(self.target, dtype=np.float64) - pos
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(self.up, dtype=np.float64))
        right /= np.linalg.norm(right)
        up = np.cross(right, fwd)
        return fwd, right, up

    def to_dict(self):
        return {
            "position": list(self.position), "target": list(self.target), "up": list(self.up),
            "fov": self.fov, "width": self.width, "height": self.height,
            "azimuth": self.azimuth, "elevation": self.elevation, "distance": self.distance,
            "fixed_intrinsics": self.fixed_intrinsics, "light": list(self.light),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("position", "target", "up", "light"):
            d[k] = tuple(d[k])
        return cls(**d)


def generate_rays(camera):
    """One unit ray per pixel centre: origins and directions, each (H*W, 3)."""
    fwd, right, up = camera.basis()
    h, w = camera.height, camera.width
    tan = np.tan(np.radians(camera.fov) / 2.0)
    xs = (2.0 * (np.arange(w) + 0.5) / w - 1.0) * tan * (w / h)
    ys = (1.0 - 2.0 * (np.arange(h) + 0.5) / h) * tan
    gx, gy = np.meshgrid(xs, ys)
    dirs = fwd[None] + gx.reshape(-1, 1) * right[None] + gy.reshape(-1, 1) * up[None]
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origins = np.broadcast_to(np.asarray(camera.position, dtype=np.float64), dirs.shape).copy()
    return origins, dirs
