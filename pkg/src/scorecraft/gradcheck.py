"""Finite-difference verification of every hand-written derivative.

Each suite builds a small random problem, evaluates the analytic gradient
once and compares its directional derivative ``<grad, d>`` with a central
difference ``(L(p + h d) - L(p - h d)) / 2h`` along random directions ``d``.
The reported error is ``|fd - an| / max(|fd|, |an|, floor)``.
"""

from dataclasses import dataclass

import numpy as np

from .camera import Camera
from .fields import ColorField, init_field
from .losses import (cosine_normal_loss, latent_norm_reg, mask_loss, masked_rgb_loss,
                     pearson_depth_loss, ReferencePack)
from .mesh_render import render_mesh, render_mesh_with_vjp, silhouette
from .neus import NeusOptions, render_neus_with_vjp
from .priors import Mixture, OnlineScoreEstimator, schedule
from .tetra import TetGrid, bcc_lattice, marching_tetrahedra

TOLERANCES = {"neus": 1e-3, "mesh": 1e-3, "losses": 1e-4, "priors": 1e-5}
COMPONENTS = tuple(TOLERANCES)
_FLOOR = 1e-10


@dataclass
class CheckResult:
    suite: str
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def passed(self):
        return bool(self.max_rel_error <= self.tolerance)

    def line(self):
        flag = "ok  " if self.passed else "FAIL"
        return f"{flag} {self.suite}/{self.name}: max rel error {self.max_rel_error:.3e} (tol {self.tolerance:.0e})"


def rel_error(fd, an, floor=_FLOOR):
    return abs(fd - an) / max(abs(fd), abs(an), floor)


def directional_errors(loss, params, grads, rng, n_dirs=32, h=1e-6):
    """Relative errors of ``<grads, d>`` against central differences of ``loss``.

    ``params`` is a list of arrays perturbed in place (and restored); ``loss``
    reads them and returns a scalar.
    """
    errs = []
    for _ in range(n_dirs):
        dirs = [rng.standard_normal(p.shape) for p in params]
        an = sum(float(np.sum(g * d)) for g, d in zip(grads, dirs))
        for p, d in zip(params, dirs):
            p += h * d
        up = loss()
        for p, d in zip(params, dirs):
            p -= 2.0 * h * d
        down = loss()
        for p, d in zip(params, dirs):
            p += h * d
        errs.append(rel_error((up - down) / (2.0 * h), an))
    return errs


def _random_adjoint(rng, h, w, channels, weight=None):
    shapes = {"rgb": (h, w, 3), "normal": (h, w, 3), "depth": (h, w), "mask": (h, w)}
    adj = {c: rng.standard_normal(shapes[c]) for c in channels}
    if weight is not None:
        adj = {c: a * (weight if a.ndim == 2 else weight[..., None]) for c, a in adj.items()}
    return adj


def _pair(out, adj):
    return sum(float(np.sum(getattr(out, c) * a)) for c, a in adj.items())


# --- suites ---------------------------------------------------------------


def neus_suite(rng):
    """Volume-rendering VJP on a 16^3 single-level field."""
    sdf, color = init_field("sphere", {"radius": 0.5}, (16,), bias=False, radius=1.0)
    sdf.levels[0] += 0.02 * rng.standard_normal(sdf.levels[0].shape)
    color.levels[0] = rng.uniform(0.2, 0.8, color.levels[0].shape)
    cam = Camera.orbit(30.0, 20.0, 2.5, 40.0, 8)
    opts = NeusOptions(samples_per_ray=32, near=1.4, far=3.6, sharpness=16.0)
    out, vjp = render_neus_with_vjp(sdf, color, cam, opts)
    results = []
    for channels in (("rgb",), ("mask",), ("depth",), ("normal",), ("rgb", "mask", "depth", "normal")):
        adj = _random_adjoint(rng, 8, 8, channels)
        g = vjp(adj)
        params = sdf.levels + color.levels
        errs = directional_errors(lambda: _pair(render_neus_with_vjp(sdf, color, cam, opts)[0], adj),
                                  params, g.sdf + g.color, rng, h=1e-6)
        results.append(("vjp[" + "+".join(channels) + "]", max(errs)))
    return results


def _sphere_mesh(resolution=10, radius=0.6, extent=1.0):
    pos, tets = bcc_lattice(resolution, extent)
    sdf = np.linalg.norm(pos, axis=1) - radius
    return marching_tetrahedra(TetGrid(pos, sdf, np.zeros_like(pos), tets, resolution, extent))


def mesh_suite(rng):
    """Mesh-renderer VJPs: texture on a 16^3 grid, vertices on interior pixels."""
    mesh = _sphere_mesh()
    mesh.vertices = mesh.vertices + 0.01 * rng.standard_normal(mesh.vertices.shape)
    tex = ColorField([rng.uniform(0.2, 0.8, (17, 17, 17, 3))], 1.0)
    cam = Camera.orbit(20.0, 15.0, 3.0, 30.0, 12, light=(4.0, 3.0, 5.0))
    results = []

    out, vjp = render_mesh_with_vjp(mesh, tex, cam, "rgb")
    adj = _random_adjoint(rng, 12, 12, ("rgb",))
    g = vjp(adj, "texture")
    errs = directional_errors(lambda: _pair(render_mesh(mesh, tex, cam, "rgb"), adj), tex.levels, g, rng)
    results.append(("texture", max(errs)))

    verts = mesh.vertices
    for mode, channels in (("rgb", ("rgb", "depth")), ("normal-map", ("rgb", "normal")),
                           ("lambertian", ("rgb",))):
        out, vjp = render_mesh_with_vjp(mesh, tex, cam, mode)
        interior = out.mask * ~silhouette(out.mask)
        adj = _random_adjoint(rng, 12, 12, channels, interior)
        g = vjp(adj, "vertices")
        errs = directional_errors(lambda: _pair(render_mesh(mesh, tex, cam, mode), adj), [verts], [g], rng,
                                  h=1e-7)
        results.append((f"vertices[{mode}]", max(errs)))
    return results


def losses_suite(rng):
    """Reference-view losses, the latent-norm regulariser and the estimator objective."""
    h = w = 8
    mask = (rng.random((h, w)) > 0.3).astype(np.float64)
    ref = rng.random((h, w, 3))
    pack = ReferencePack(ref, mask, rng.uniform(2.0, 3.0, (h, w)), _unit(rng.standard_normal((h, w, 3))), None)
    results = []

    def check(name, fn, x):
        _, g = fn(x)
        errs = directional_errors(lambda: fn(x)[0], [x], [g], rng, h=1e-6)
        results.append((name, max(errs)))

    check("masked_rgb", lambda x: masked_rgb_loss(x, pack), rng.random((h, w, 3)))
    check("mask", lambda x: mask_loss(x, mask), rng.random((h, w)))
    check("pearson_depth", lambda x: pearson_depth_loss(x, pack.depth, mask), rng.uniform(2.0, 3.0, (h, w)))
    check("cosine_normal", lambda x: cosine_normal_loss(x, pack.normal, mask), rng.standard_normal((h, w, 3)))
    xr = rng.standard_normal((4, 12))
    check("latent_norm", lambda x: latent_norm_reg(x, xr), rng.standard_normal((4, 12)))
    enc = rng.standard_normal((5, 12))
    check("latent_norm[encoder]", lambda x: latent_norm_reg(x, xr, enc), rng.standard_normal((4, 12)))

    x = rng.random(48)
    eps = rng.standard_normal(48)
    mean = rng.random(48)
    for t in (0.2, 0.6):
        est = OnlineScoreEstimator(0.1, 0.3, params={"k": (mean, np.log(0.3))})
        _, g_mean, _ = est.loss_grad(x, t, eps, "k")
        m = mean.copy()
        errs = directional_errors(
            lambda: OnlineScoreEstimator(0.1, params={"k": (m, np.log(0.3))}).loss_grad(x, t, eps, "k")[0],
            [m], [g_mean], rng, h=1e-6)
        results.append((f"estimator_mean[t={t}]", max(errs)))
        # the stored log-variance gradient is the pixel average
        _, _, g_lv = est.loss_grad(x, t, eps, "k")
        lv = np.array([np.log(0.3)])
        errs = directional_errors(
            lambda: OnlineScoreEstimator(0.1, params={"k": (mean, float(lv[0]))}).loss_grad(x, t, eps, "k")[0],
            [lv], [np.array([g_lv * x.size])], rng, h=1e-6)
        results.append((f"estimator_log_var[t={t}]", max(errs)))
    return results


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def priors_suite(rng, n_mixtures=20):
    """Closed-form noise prediction against ``-sigma * grad log p_t`` by differences."""
    results = []
    for t in (0.1, 0.5, 0.9):
        errs = []
        _, s = schedule(t)
        for _ in range(n_mixtures):
            mix = random_mixture(rng)
            x = rng.standard_normal(mix.dim)
            pred = mix.predict_noise(x, t)
            grad = numerical_gradient(lambda y: mix.log_density(y, t), x)
            fd = -s * grad
            errs.append(float(np.max(np.abs(fd - pred)) / max(np.max(np.abs(fd)), _FLOOR)))
        results.append((f"score[t={t}]", max(errs)))
    return results


def random_mixture(rng, max_components=4, max_dim=6):
    k = int(rng.integers(1, max_components + 1))
    d = int(rng.integers(1, max_dim + 1))
    w = rng.random(k) + 0.1
    return Mixture(rng.standard_normal((k, d)), rng.uniform(0.2, 1.0, k), w / w.sum())


def numerical_gradient(f, x, h=1e-5):
    """Fourth-order central differences per coordinate."""
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h)
    return g


SUITES = {"neus": neus_suite, "mesh": mesh_suite, "losses": losses_suite, "priors": priors_suite}


def run_suite(component, seed=0):
    if component not in SUITES:
        raise ValueError(f"unknown component {component!r}; choose from {list(SUITES)}")
    rng = np.random.default_rng(seed)
    tol = TOLERANCES[component]
    return [CheckResult(component, name, float(err), tol) for name, err in SUITES[component](rng)]
