"""Compiled vs numpy kernels: wall time and agreement.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from scorecraft import kernels
from scorecraft.bvh import build_bvh
from scorecraft.camera import Camera, generate_rays
from scorecraft.tetra import TetGrid, bcc_lattice, marching_tetrahedra


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _sphere_triangles(resolution=32):
    pos, tets = bcc_lattice(resolution, 1.0)
    grid = TetGrid(pos, np.linalg.norm(pos, axis=1) - 0.6, np.zeros_like(pos), tets, resolution, 1.0)
    mesh = marching_tetrahedra(grid)
    v, f = mesh.vertices, mesh.triangles
    return v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]


def cases():
    rng = np.random.default_rng(0)
    grid = rng.standard_normal((65, 65, 65, 3))
    u = rng.uniform(0, 64, (200_000, 3))
    d = rng.standard_normal((200_000, 3))
    v0, v1, v2 = _sphere_triangles()
    bvh = build_bvh(v0, v1, v2)
    origins, dirs = generate_rays(Camera.orbit(30.0, 20.0, 3.0, 30.0, 64))
    return {
        "trilerp 200k pts, 65^3x3": lambda b: kernels.trilerp(grid, u, b),
        "trilerp_adjoint 200k pts": lambda b: kernels.trilerp_adjoint(65, 3, u, d, None, b),
        f"cast_rays 64x64, {v0.shape[0]} tris": lambda b: kernels.cast_rays(origins, dirs, v0, v1, v2, bvh, b),
    }


def _max_diff(a, b):
    """Largest difference over finite entries; inf if the non-finite entries disagree (missed rays)."""
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    worst = 0.0
    for x, y in zip(a, b):
        x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
        fin = np.isfinite(x)
        if not np.array_equal(fin, np.isfinite(y)) or not np.array_equal(x[~fin], y[~fin], equal_nan=True):
            return np.inf
        if fin.any():
            worst = max(worst, float(np.max(np.abs(x[fin] - y[fin]))))
    return worst


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if kernels.BACKEND != "cython":
        print("compiled kernels unavailable; timing the numpy fallback only")
    print(f"{'kernel':40s} {'numpy s':>10s} {'cython s':>10s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, fn in cases().items():
        t_np, out_np = _best(lambda: fn("numpy"), args.repeat)
        if kernels.BACKEND == "cython":
            t_cy, out_cy = _best(lambda: fn("cython"), args.repeat)
            print(f"{name:40s} {t_np:10.4f} {t_cy:10.4f} {t_np / t_cy:8.1f} {_max_diff(out_np, out_cy):11.2e}")
        else:
            print(f"{name:40s} {t_np:10.4f} {'-':>10s} {'-':>8s} {'-':>11s}")


if __name__ == "__main__":
    main()
