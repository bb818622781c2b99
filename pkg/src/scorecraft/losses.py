"""Distillation gradients and reference-view losses.

The distillation functions return image-space gradients of the form
``w(t) (A - B)``, with ``w(t) = sigma_t^2`` unless a weight is given:

* score distillation: ``A`` is the guided prior prediction, ``B`` the injected noise;
* view-conditioned distillation: ``A`` is conditioned on the reference image and pose;
* variational / bootstrapped distillation: ``B`` is an estimator of the current
  rendering distribution instead of the injected noise.

Every loss returns ``(value, gradient)`` with the gradient of that value with
respect to the first argument.
"""

from dataclasses import dataclass

import numpy as np

from .priors import add_noise, cfg_combine, schedule

SDS_GUIDANCE = 7.5
VSD_GUIDANCE = 1.0
HYBRID_MU = 2.0


@dataclass
class ReferencePack:
    """Reference-view supervision: image, binary mask, depth, normals and camera."""

    rgb: np.ndarray
    mask: np.ndarray
    depth: np.ndarray
    normal: np.ndarray
    camera: object

    def __post_init__(self):
        m = np.asarray(self.mask)
        if not np.all((m == 0) | (m == 1)):
            raise ValueError("reference mask must be binary")


def _weight(t, weight):
    if not 0.0 < t < 1.0:
        raise ValueError(f"distillation time must lie in (0, 1), got {t}")
    return schedule(t)[1] ** 2 if weight is None else float(weight)


def guided_noise(prior, x_t, t, condition, cfg_scale):
    eps_c = prior.predict_noise(x_t, t, condition)
    if cfg_scale == 0.0:
        return eps_c
    return cfg_combine(eps_c, prior.predict_noise(x_t, t, None), cfg_scale)


def sds_grad(prior, x, t, condition, eps, cfg_scale=SDS_GUIDANCE, weight=None):
    """``w(t) (eps_guided(x_t) - eps)`` with ``x_t = add_noise(x, t, eps)``."""
    w = _weight(t, weight)
    x_t = add_noise(x, t, eps)
    return w * (guided_noise(prior, x_t, t, condition, cfg_scale) - eps)


def sds_3d_grad(view_prior, x, reference_image, camera, t, eps, weight=None):
    """Score distillation against a prior conditioned on a reference view and a pose."""
    w = _weight(t, weight)
    x_t = add_noise(x, t, eps)
    pred = view_prior.predict_noise(x_t, t, reference_image, camera).reshape(np.shape(x))
    return w * (pred - eps)


def hybrid_grad(g_2d, g_3d, mu=HYBRID_MU):
    g_2d = np.asarray(g_2d, dtype=np.float64)
    g_3d = np.asarray(g_3d, dtype=np.float64)
    if g_2d.shape != g_3d.shape:
        raise ValueError("hybrid gradient inputs differ in shape")
    return g_2d + mu * g_3d


def vsd_grad(prior, estimator, x, t, condition, camera, eps, cfg_scale=VSD_GUIDANCE, weight=None):
    """``w(t) (eps_prior(x_t | condition) - eps_est(x_t | camera))`` on a shared ``x_t``.

    ``estimator`` is any object with ``predict(x_t, t, key)``; ``camera`` is
    the key it is queried with.
    """
    w = _weight(t, weight)
    x_t = add_noise(x, t, eps)
    pred = guided_noise(prior, x_t, t, condition, cfg_scale)
    return w * (pred - estimator.predict(x_t, t, camera))


def bsd_grad(refit_prior, estimator, x, t, condition, camera, eps, cfg_scale=VSD_GUIDANCE, weight=None):
    """Variational distillation against a prior refit on augmented renderings."""
    return vsd_grad(refit_prior, estimator, x, t, condition, camera, eps, cfg_scale, weight)


def _same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def masked_rgb_loss(x, pack):
    """``|| mask * (reference - x) ||_2`` over all pixels and channels."""
    x, ref = _same_shape(x, pack.rgb)
    m = np.asarray(pack.mask, dtype=np.float64)
    if m.shape != x.shape[:2]:
        raise ValueError(f"mask shape {m.shape} does not match image {x.shape}")
    r = m[..., None] * (x - ref)
    val = float(np.sqrt(np.sum(r * r)))
    if val == 0.0:
        return 0.0, np.zeros_like(x)
    return val, m[..., None] * r / val


def mask_loss(rendered, reference):
    """``|| reference - rendered ||_2``."""
    g, m = _same_shape(rendered, reference)
    r = g - m
    val = float(np.sqrt(np.sum(r * r)))
    if val == 0.0:
        return 0.0, np.zeros_like(g)
    return val, r / val


def pearson_depth_loss(depth, reference, mask):
    """Negative Pearson correlation of the two depth maps over masked pixels."""
    d, ref = _same_shape(depth, reference)
    sel = np.asarray(mask) > 0.5
    if sel.shape != d.shape:
        raise ValueError("mask shape does not match depth")
    if sel.sum() < 2:
        raise ValueError("degenerate depth: fewer than two masked pixels")
    a = d[sel] - d[sel].mean()
    b = ref[sel] - ref[sel].mean()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na <= 1e-12 * max(1.0, np.abs(d[sel]).max()) or nb <= 1e-12 * max(1.0, np.abs(ref[sel]).max()):
        raise ValueError("degenerate depth: zero variance")
    rho = float(a @ b / (na * nb))
    grad = np.zeros_like(d)
    grad[sel] = -(b / (na * nb) - rho * a / na ** 2)
    return -rho, grad


def cosine_normal_loss(normal, reference, mask):
    """Mean over masked pixels of ``-cos`` of the angle between the normals."""
    n, ref = _same_shape(normal, reference)
    sel = np.asarray(mask) > 0.5
    if sel.shape != n.shape[:-1]:
        raise ValueError("mask shape does not match normals")
    count = int(sel.sum())
    grad = np.zeros_like(n)
    if count == 0:
        return 0.0, grad
    a, b = n[sel], ref[sel]
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    if np.any(na == 0.0) or np.any(nb == 0.0):
        raise ValueError("zero-norm normal on a masked pixel")
    cos = np.einsum("ij,ij->i", a, b) / (na * nb)
    grad[sel] = -(b / (na * nb)[:, None] - cos[:, None] * a / (na ** 2)[:, None]) / count
    return float(-cos.mean()), grad


def latent_norm_reg(x, x_reg, encoder=None):
    """``sum_i (||E x_i|| - ||E xreg_i||)^2``.

    ``encoder`` is a (k, D) matrix, identity when omitted. Inputs of shape
    (D,) are one item; (B, D) is a batch summed over rows.
    """
    x, xr = _same_shape(x, x_reg)
    single = x.ndim == 1
    x2, xr2 = np.atleast_2d(x), np.atleast_2d(xr)
    if encoder is None:
        z, zr = x2, xr2
    else:
        e = np.asarray(encoder, dtype=np.float64)
        z, zr = x2 @ e.T, xr2 @ e.T
    nz = np.linalg.norm(z, axis=1)
    nzr = np.linalg.norm(zr, axis=1)
    diff = nz - nzr
    val = float(np.sum(diff ** 2))
    safe = np.where(nz > 0, nz, 1.0)
    g_z = np.where((nz > 0)[:, None], (2.0 * diff / safe)[:, None] * z, 0.0)
    grad = g_z if encoder is None else g_z @ np.asarray(encoder, dtype=np.float64)
    return val, grad[0] if single else grad
