"""Volume rendering of an SDF with logistic (NeuS-style) opacities.

Along each ray N stratified samples produce N-1 intervals. With ``Phi`` the
logistic sigmoid of steepness ``s``, interval k has opacity

    alpha_k = max(1 - Phi(s f_{k+1}) / Phi(s f_k), 0)

and standard front-to-back compositing yields rgb, mask (accumulated opacity),
depth (weight-averaged interval midpoint distance, divided by the mask) and
normal (composited unit SDF gradients, renormalised). Interval colours and
normals are the mean of the two endpoint values. Residual transmittance
shows the constant background colour.

:func:`render_neus_with_vjp` returns the image together with a closure for
the exact reverse-mode product with respect to every field level.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from .camera import generate_rays
from .fields import color_adjoint, color_eval, sdf_adjoint, sdf_eval_grad
from .image import RenderOutput, check_adjoint

_MASK_EPS = 1e-6
_NORMAL_EPS = 1e-10


@dataclass
class NeusOptions:
    samples_per_ray: int = 64
    near: float = None          # defaults to camera distance - field radius
    far: float = None           # defaults to camera distance + field radius
    sharpness: float = None     # defaults to the field's own steepness
    background: tuple = (1.0, 1.0, 1.0)
    jitter: np.ndarray = dc_field(default=None, repr=False)  # (H*W, N) in [0, 1) or None for bin centres


@dataclass
class FieldGrad:
    sdf: list
    color: list

    def dot(self, other):
        return sum(float(np.sum(a * b)) for a, b in zip(self.sdf + self.color, other.sdf + other.color))


def _range(sdf, camera, opts):
    near = opts.near
    far = opts.far
    if near is None or far is None:
        dist = float(np.linalg.norm(camera.position))
        near = max(dist - sdf.radius, 1e-3) if near is None else near
        far = dist + sdf.radius if far is None else far
    if near >= far:
        raise ValueError(f"near ({near}) must be smaller than far ({far})")
    return near, far


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _sigmoid(x):
    return np.exp(_log_sigmoid(x))


def render_neus(sdf, color, camera, opts=None):
    return render_neus_with_vjp(sdf, color, camera, opts)[0]


def render_neus_vjp(sdf, color, camera, opts, adjoint):
    """Gradient of ``<adjoint, render>`` w.r.t. all SDF and colour levels."""
    return render_neus_with_vjp(sdf, color, camera, opts)[1](adjoint)


def render_neus_with_vjp(sdf, color, camera, opts=None):
    opts = opts or NeusOptions()
    n = int(opts.samples_per_ray)
    if n < 16:
        raise ValueError("samples_per_ray must be at least 16")
    near, far = _range(sdf, camera, opts)
    s = float(opts.sharpness if opts.sharpness is not None else sdf.sharpness)
    bg = np.asarray(opts.background, dtype=np.float64)
    h, w = camera.height, camera.width

    origins, dirs = generate_rays(camera)
    n_rays = origins.shape[0]
    jitter = 0.5 if opts.jitter is None else np.asarray(opts.jitter)
    ts = near + (np.arange(n)[None, :] + jitter) * ((far - near) / n)
    ts = np.broadcast_to(ts, (n_rays, n))
    pts = (origins[:, None, :] + ts[..., None] * dirs[:, None, :]).reshape(-1, 3)

    f, g, _ = sdf_eval_grad(sdf, pts)
    col, live = color_eval(color, pts)
    f = f.reshape(n_rays, n)
    g = g.reshape(n_rays, n, 3)
    col = col.reshape(n_rays, n, 3)
    gnorm = np.maximum(np.linalg.norm(g, axis=-1), 1e-12)
    nrm = g / gnorm[..., None]

    logphi = _log_sigmoid(s * f)
    delta = logphi[:, 1:] - logphi[:, :-1]
    raw = -np.expm1(delta)
    active = raw > 0.0
    alpha = np.where(active, raw, 0.0)
    trans = np.cumprod(np.concatenate([np.ones((n_rays, 1)), 1.0 - alpha[:, :-1]], axis=1), axis=1)
    wts = trans * alpha

    cbar = 0.5 * (col[:, 1:] + col[:, :-1])
    nbar = 0.5 * (nrm[:, 1:] + nrm[:, :-1])
    zmid = 0.5 * (ts[:, 1:] + ts[:, :-1])

    mask = wts.sum(axis=1)
    rgb = np.einsum("rk,rkc->rc", wts, cbar) + (1.0 - mask)[:, None] * bg
    nraw = np.einsum("rk,rkc->rc", wts, nbar)
    nlen = np.linalg.norm(nraw, axis=1)
    has_n = nlen > _NORMAL_EPS
    normal = np.where(has_n[:, None], nraw / np.where(has_n, nlen, 1.0)[:, None], 0.0)
    dsum = np.einsum("rk,rk->r", wts, zmid)
    has_m = mask > _MASK_EPS
    depth = np.where(has_m, dsum / np.where(has_m, mask, 1.0), 0.0)

    out = RenderOutput(
        rgb=rgb.reshape(h, w, 3),
        depth=depth.reshape(h, w),
        normal=normal.reshape(h, w, 3),
        mask=mask.reshape(h, w),
    )

    def vjp(adjoint):
        adj = check_adjoint(adjoint, h, w)
        a_rgb = adj.get("rgb", np.zeros((h, w, 3))).reshape(n_rays, 3)
        a_mask = adj.get("mask", np.zeros((h, w))).reshape(n_rays)
        a_depth = adj.get("depth", np.zeros((h, w))).reshape(n_rays)
        a_norm = adj.get("normal", np.zeros((h, w, 3))).reshape(n_rays, 3)

        safe_len = np.where(has_n, nlen, 1.0)
        d_nraw = np.where(
            has_n[:, None],
            (a_norm - normal * np.einsum("rc,rc->r", normal, a_norm)[:, None]) / safe_len[:, None],
            0.0,
        )
        safe_m = np.where(has_m, mask, 1.0)
        d_dsum = np.where(has_m, a_depth / safe_m, 0.0)
        d_mask = a_mask + np.where(has_m, -a_depth * dsum / safe_m ** 2, 0.0) - a_rgb @ bg

        d_w = (np.einsum("rc,rkc->rk", a_rgb, cbar) + d_mask[:, None]
               + np.einsum("rc,rkc->rk", d_nraw, nbar) + d_dsum[:, None] * zmid)
        d_cbar = wts[..., None] * a_rgb[:, None, :]
        d_nbar = wts[..., None] * d_nraw[:, None, :]

        # d alpha_k = T_k (dw_k - S_k), S_k = sum_{i>k} dw_i alpha_i prod_{k<j<i} (1 - alpha_j)
        m = n - 1
        tail = np.zeros((n_rays, m))
        for k in range(m - 2, -1, -1):
            tail[:, k] = d_w[:, k + 1] * alpha[:, k + 1] + (1.0 - alpha[:, k + 1]) * tail[:, k + 1]
        d_alpha = trans * (d_w - tail)
        d_delta = np.where(active, -d_alpha * np.exp(delta), 0.0)
        dlog = s * _sigmoid(-s * f)
        d_f = np.zeros((n_rays, n))
        d_f[:, 1:] += d_delta * dlog[:, 1:]
        d_f[:, :-1] -= d_delta * dlog[:, :-1]

        d_col = np.zeros((n_rays, n, 3))
        d_col[:, 1:] += 0.5 * d_cbar
        d_col[:, :-1] += 0.5 * d_cbar
        d_nrm = np.zeros((n_rays, n, 3))
        d_nrm[:, 1:] += 0.5 * d_nbar
        d_nrm[:, :-1] += 0.5 * d_nbar
        d_g = (d_nrm - nrm * np.einsum("rkc,rkc->rk", nrm, d_nrm)[..., None]) / gnorm[..., None]

        return FieldGrad(
            sdf=sdf_adjoint(sdf, pts, d_f.reshape(-1), d_g.reshape(-1, 3)),
            color=color_adjoint(color, pts, d_col.reshape(-1, 3), live),
        )

    out.weights = wts.reshape(h, w, n - 1)
    out.transmittance = (trans[:, -1] * (1.0 - alpha[:, -1])).reshape(h, w)
    return out, vjp
