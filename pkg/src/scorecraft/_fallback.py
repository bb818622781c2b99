"""Pure-numpy implementations of the hot kernels.

Every function here has a twin in the compiled ``_kernels`` extension with the
same signature and semantics. :mod:`scorecraft.kernels` picks one at import.
"""

import numpy as np

# corner offsets in (x, y, z) order, shared with the compiled twin
CORNERS = np.array(
    [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [0, 0, 1], [1, 0, 1], [0, 1, 1], [1, 1, 1]],
    dtype=np.int64,
)


def _cells(n, u):
    i0 = np.clip(np.floor(u).astype(np.int64), 0, n - 2)
    return i0, u - i0


def trilerp(grid, u):
    """Trilinear interpolation of a corner grid.

    Args:
        grid: (n, n, n, C) corner values.
        u: (N, 3) query coordinates in grid units, inside [0, n-1].

    Returns:
        vals (N, C) and grads (N, C, 3); grads are derivatives w.r.t. ``u``.
    """
    n = grid.shape[0]
    i0, f = _cells(n, u)
    fx, fy, fz = f[:, 0:1], f[:, 1:2], f[:, 2:3]
    gx, gy, gz = 1.0 - fx, 1.0 - fy, 1.0 - fz
    c = [grid[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz] for dx, dy, dz in CORNERS]
    c00 = c[0] * gx + c[1] * fx
    c10 = c[2] * gx + c[3] * fx
    c01 = c[4] * gx + c[5] * fx
    c11 = c[6] * gx + c[7] * fx
    c0 = c00 * gy + c10 * fy
    c1 = c01 * gy + c11 * fy
    vals = c0 * gz + c1 * fz

    dx0 = (c[1] - c[0]) * gy + (c[3] - c[2]) * fy
    dx1 = (c[5] - c[4]) * gy + (c[7] - c[6]) * fy
    ddx = dx0 * gz + dx1 * fz
    ddy = (c10 - c00) * gz + (c11 - c01) * fz
    ddz = c1 - c0
    grads = np.stack([ddx, ddy, ddz], axis=-1)
    return vals, grads


def _corner_weights(f):
    """Value weights (N, 8) and their u-derivatives (N, 8, 3)."""
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
    w = np.empty((f.shape[0], 8))
    dw = np.empty((f.shape[0], 8, 3))
    for k, (dx, dy, dz) in enumerate(CORNERS):
        ax = fx if dx else 1.0 - fx
        ay = fy if dy else 1.0 - fy
        az = fz if dz else 1.0 - fz
        sx = 1.0 if dx else -1.0
        sy = 1.0 if dy else -1.0
        sz = 1.0 if dz else -1.0
        w[:, k] = ax * ay * az
        dw[:, k, 0] = sx * ay * az
        dw[:, k, 1] = ax * sy * az
        dw[:, k, 2] = ax * ay * sz
    return w, dw


def trilerp_adjoint(n, channels, u, d_vals=None, d_grads=None):
    """Reverse of :func:`trilerp` with respect to the corner values.

    Args:
        n: grid side (corners per axis).
        channels: C.
        u: (N, 3) query coordinates used in the forward pass.
        d_vals: (N, C) adjoint of the interpolated values, or None.
        d_grads: (N, C, 3) adjoint of the u-gradients, or None.

    Returns:
        (n, n, n, C) gradient with respect to the grid.
    """
    i0, f = _cells(n, u)
    w, dw = _corner_weights(f)
    out = np.zeros(n * n * n * channels)
    for k, (dx, dy, dz) in enumerate(CORNERS):
        flat = ((i0[:, 0] + dx) * n + (i0[:, 1] + dy)) * n + (i0[:, 2] + dz)
        contrib = np.zeros((u.shape[0], channels))
        if d_vals is not None:
            contrib += w[:, k:k + 1] * d_vals
        if d_grads is not None:
            contrib += np.einsum("ncj,nj->nc", d_grads, dw[:, k, :])
        for ch in range(channels):
            out[ch::channels] += np.bincount(flat, weights=contrib[:, ch], minlength=n ** 3)
    return out.reshape(n, n, n, channels)


def cast_rays(origins, dirs, v0, e1, e2, bvh=None, chunk=128):
    """Closest-hit ray/triangle intersection (Moller-Trumbore, no culling).

    Ties in hit distance resolve to the lower triangle index. The ``bvh``
    argument is accepted for signature parity and ignored: this path tests
    every triangle.

    Returns:
        tri (R,) int64 (-1 for miss), t (R,), u (R,), v (R,)
    """
    n_rays = origins.shape[0]
    tri = np.full(n_rays, -1, dtype=np.int64)
    t_out = np.full(n_rays, np.inf)
    u_out = np.zeros(n_rays)
    v_out = np.zeros(n_rays)
    if v0.shape[0] == 0:
        return tri, t_out, u_out, v_out
    for s in range(0, n_rays, chunk):
        o = origins[s:s + chunk, None, :]
        d = dirs[s:s + chunk, None, :]
        pvec = np.cross(d, e2[None])
        det = np.sum(e1[None] * pvec, axis=-1)
        ok = np.abs(det) > 1e-14
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tvec = o - v0[None]
        u = np.sum(tvec * pvec, axis=-1) * inv
        qvec = np.cross(tvec, e1[None])
        v = np.sum(d * qvec, axis=-1) * inv
        t = np.sum(e2[None] * qvec, axis=-1) * inv
        hit = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > 1e-9)
        t = np.where(hit, t, np.inf)
        best = np.argmin(t, axis=1)
        rows = np.arange(best.shape[0])
        bt = t[rows, best]
        found = np.isfinite(bt)
        sl = slice(s, s + best.shape[0])
        tri[sl] = np.where(found, best, -1)
        t_out[sl] = bt
        u_out[sl] = np.where(found, u[rows, best], 0.0)
        v_out[sl] = np.where(found, v[rows, best], 0.0)
    return tri, t_out, u_out, v_out
