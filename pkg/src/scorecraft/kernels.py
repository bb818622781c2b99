"""Kernel dispatch: compiled extension if importable, numpy fallback otherwise.

Set ``SCORECRAFT_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _fallback
from .bvh import build_bvh

_ext = None
if not os.environ.get("SCORECRAFT_PURE_PYTHON"):
    try:
        from . import _kernels as _ext
    except ImportError:  # extension not built
        _ext = None

BACKEND = "cython" if _ext is not None else "numpy"


def _impl(backend):
    if backend is None:
        backend = BACKEND
    if backend == "cython":
        if _ext is None:
            raise RuntimeError("compiled kernels are not available")
        return _ext
    if backend == "numpy":
        return _fallback
    raise ValueError(f"unknown backend {backend!r}")


def trilerp(grid, u, backend=None):
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    return _impl(backend).trilerp(grid, u)


def trilerp_adjoint(n, channels, u, d_vals=None, d_grads=None, backend=None):
    u = np.ascontiguousarray(u, dtype=np.float64)
    if d_vals is not None:
        d_vals = np.ascontiguousarray(d_vals, dtype=np.float64)
    if d_grads is not None:
        d_grads = np.ascontiguousarray(d_grads, dtype=np.float64)
    return _impl(backend).trilerp_adjoint(n, channels, u, d_vals, d_grads)


def cast_rays(origins, dirs, v0, v1, v2, bvh=None, backend=None):
    """Closest hit per ray against triangles (v0, v1, v2).

    Returns (tri, t, u, v) with tri == -1 on a miss; (u, v) are the
    barycentric weights of v1 and v2.
    """
    impl = _impl(backend)
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    v0 = np.ascontiguousarray(v0, dtype=np.float64)
    e1 = np.ascontiguousarray(v1 - v0)
    e2 = np.ascontiguousarray(v2 - v0)
    if impl is _ext and v0.shape[0] > 0 and bvh is None:
        bvh = build_bvh(v0, v1, v2)
    return impl.cast_rays(origins, dirs, v0, e1, e2, bvh)
