# cython: language_level=3
"""Compiled twins of the kernels in ``_fallback.py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, fabs, INFINITY

cnp.import_array()


cdef inline Py_ssize_t _cell(double x, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i = <Py_ssize_t>floor(x)
    if i < 0:
        i = 0
    if i > n - 2:
        i = n - 2
    return i


def trilerp(const double[:, :, :, ::1] grid, const double[:, ::1] u):
    cdef Py_ssize_t n = grid.shape[0]
    cdef Py_ssize_t C = grid.shape[3]
    cdef Py_ssize_t N = u.shape[0]
    vals_a = np.empty((N, C))
    grads_a = np.empty((N, C, 3))
    cdef double[:, ::1] vals = vals_a
    cdef double[:, :, ::1] grads = grads_a
    cdef Py_ssize_t p, ch, ix, iy, iz
    cdef double fx, fy, fz, gx, gy, gz
    cdef double c0, c1, c2, c3, c4, c5, c6, c7
    cdef double c00, c10, c01, c11, cc0, cc1, dx0, dx1
    with nogil:
        for p in range(N):
            ix = _cell(u[p, 0], n)
            iy = _cell(u[p, 1], n)
            iz = _cell(u[p, 2], n)
            fx = u[p, 0] - ix
            fy = u[p, 1] - iy
            fz = u[p, 2] - iz
            gx = 1.0 - fx
            gy = 1.0 - fy
            gz = 1.0 - fz
            for ch in range(C):
                c0 = grid[ix, iy, iz, ch]
                c1 = grid[ix + 1, iy, iz, ch]
                c2 = grid[ix, iy + 1, iz, ch]
                c3 = grid[ix + 1, iy + 1, iz, ch]
                c4 = grid[ix, iy, iz + 1, ch]
                c5 = grid[ix + 1, iy, iz + 1, ch]
                c6 = grid[ix, iy + 1, iz + 1, ch]
                c7 = grid[ix + 1, iy + 1, iz + 1, ch]
                c00 = c0 * gx + c1 * fx
                c10 = c2 * gx + c3 * fx
                c01 = c4 * gx + c5 * fx
                c11 = c6 * gx + c7 * fx
                cc0 = c00 * gy + c10 * fy
                cc1 = c01 * gy + c11 * fy
                vals[p, ch] = cc0 * gz + cc1 * fz
                dx0 = (c1 - c0) * gy + (c3 - c2) * fy
                dx1 = (c5 - c4) * gy + (c7 - c6) * fy
                grads[p, ch, 0] = dx0 * gz + dx1 * fz
                grads[p, ch, 1] = (c10 - c00) * gz + (c11 - c01) * fz
                grads[p, ch, 2] = cc1 - cc0
    return vals_a, grads_a


def trilerp_adjoint(Py_ssize_t n, Py_ssize_t channels, const double[:, ::1] u,
                    d_vals=None, d_grads=None):
    out_a = np.zeros((n, n, n, channels))
    cdef double[:, :, :, ::1] out = out_a
    cdef Py_ssize_t N = u.shape[0]
    cdef bint has_v = d_vals is not None
    cdef bint has_g = d_grads is not None
    cdef const double[:, ::1] dv
    cdef const double[:, :, ::1] dg
    if has_v:
        dv = np.ascontiguousarray(d_vals, dtype=np.float64)
    else:
        dv = np.zeros((1, channels))
    if has_g:
        dg = np.ascontiguousarray(d_grads, dtype=np.float64)
    else:
        dg = np.zeros((1, channels, 3))
    cdef Py_ssize_t p, ch, k, ix, iy, iz, dx, dy, dz
    cdef double fx, fy, fz, ax, ay, az, sx, sy, sz, acc
    with nogil:
        for p in range(N):
            ix = _cell(u[p, 0], n)
            iy = _cell(u[p, 1], n)
            iz = _cell(u[p, 2], n)
            fx = u[p, 0] - ix
            fy = u[p, 1] - iy
            fz = u[p, 2] - iz
            for k in range(8):
                dx = k & 1
                dy = (k >> 1) & 1
                dz = (k >> 2) & 1
                ax = fx if dx else 1.0 - fx
                ay = fy if dy else 1.0 - fy
                az = fz if dz else 1.0 - fz
                sx = 1.0 if dx else -1.0
                sy = 1.0 if dy else -1.0
                sz = 1.0 if dz else -1.0
                for ch in range(channels):
                    acc = 0.0
                    if has_v:
                        acc = acc + ax * ay * az * dv[p, ch]
                    if has_g:
                        acc = acc + (sx * ay * az * dg[p, ch, 0]
                                     + ax * sy * az * dg[p, ch, 1]
                                     + ax * ay * sz * dg[p, ch, 2])
                    out[ix + dx, iy + dy, iz + dz, ch] += acc
    return out_a


cdef inline bint _slab(const double* o, const double* inv, const double* lo,
                       const double* hi, double tmax) noexcept nogil:
    cdef double t0 = 0.0
    cdef double t1 = tmax
    cdef double a, b, tmp
    cdef int k
    for k in range(3):
        a = (lo[k] - o[k]) * inv[k]
        b = (hi[k] - o[k]) * inv[k]
        if a > b:
            tmp = a
            a = b
            b = tmp
        if a > t0:
            t0 = a
        if b < t1:
            t1 = b
        if t0 > t1:
            return False
    return True


def cast_rays(const double[:, ::1] origins, const double[:, ::1] dirs,
              const double[:, ::1] v0, const double[:, ::1] e1, const double[:, ::1] e2,
              bvh):
    cdef Py_ssize_t R = origins.shape[0]
    tri_a = np.full(R, -1, dtype=np.int64)
    t_a = np.full(R, np.inf)
    u_a = np.zeros(R)
    v_a = np.zeros(R)
    if v0.shape[0] == 0:
        return tri_a, t_a, u_a, v_a
    cdef long long[::1] tri = tri_a
    cdef double[::1] tt = t_a
    cdef double[::1] uu = u_a
    cdef double[::1] vv = v_a
    cdef const double[:, ::1] lo = np.ascontiguousarray(bvh.lo)
    cdef const double[:, ::1] hi = np.ascontiguousarray(bvh.hi)
    cdef const long long[::1] left = np.ascontiguousarray(bvh.left, dtype=np.int64)
    cdef const long long[::1] right = np.ascontiguousarray(bvh.right, dtype=np.int64)
    cdef const long long[::1] start = np.ascontiguousarray(bvh.start, dtype=np.int64)
    cdef const long long[::1] count = np.ascontiguousarray(bvh.count, dtype=np.int64)
    cdef const long long[::1] order = np.ascontiguousarray(bvh.order, dtype=np.int64)
    cdef long long[::1] stack = np.empty(256, dtype=np.int64)
    cdef Py_ssize_t r, sp, node, j, idx
    cdef double o[3]
    cdef double d[3]
    cdef double inv[3]
    cdef double pv[3]
    cdef double tv[3]
    cdef double qv[3]
    cdef double det, idet, u, v, t, best_t, best_u, best_v
    cdef long long best_i
    cdef int k
    with nogil:
        for r in range(R):
            for k in range(3):
                o[k] = origins[r, k]
                d[k] = dirs[r, k]
                inv[k] = 1.0 / d[k] if d[k] != 0.0 else INFINITY
            best_t = INFINITY
            best_i = -1
            best_u = 0.0
            best_v = 0.0
            sp = 0
            stack[sp] = 0
            sp += 1
            while sp > 0:
                sp -= 1
                node = stack[sp]
                if not _slab(o, inv, &lo[node, 0], &hi[node, 0], best_t):
                    continue
                if left[node] >= 0:
                    stack[sp] = right[node]
                    sp += 1
                    stack[sp] = left[node]
                    sp += 1
                    continue
                for j in range(start[node], start[node] + count[node]):
                    idx = order[j]
                    pv[0] = d[1] * e2[idx, 2] - d[2] * e2[idx, 1]
                    pv[1] = d[2] * e2[idx, 0] - d[0] * e2[idx, 2]
                    pv[2] = d[0] * e2[idx, 1] - d[1] * e2[idx, 0]
                    det = e1[idx, 0] * pv[0] + e1[idx, 1] * pv[1] + e1[idx, 2] * pv[2]
                    if fabs(det) <= 1e-14:
                        continue
                    idet = 1.0 / det
                    tv[0] = o[0] - v0[idx, 0]
                    tv[1] = o[1] - v0[idx, 1]
                    tv[2] = o[2] - v0[idx, 2]
                    u = (tv[0] * pv[0] + tv[1] * pv[1] + tv[2] * pv[2]) * idet
                    if u < 0.0:
                        continue
                    qv[0] = tv[1] * e1[idx, 2] - tv[2] * e1[idx, 1]
                    qv[1] = tv[2] * e1[idx, 0] - tv[0] * e1[idx, 2]
                    qv[2] = tv[0] * e1[idx, 1] - tv[1] * e1[idx, 0]
                    v = (d[0] * qv[0] + d[1] * qv[1] + d[2] * qv[2]) * idet
                    if v < 0.0 or u + v > 1.0:
                        continue
                    t = (e2[idx, 0] * qv[0] + e2[idx, 1] * qv[1] + e2[idx, 2] * qv[2]) * idet
                    if t <= 1e-9:
                        continue
                    if t < best_t or (t == best_t and idx < best_i):
                        best_t = t
                        best_i = idx
                        best_u = u
                        best_v = v
            tri[r] = best_i
            tt[r] = best_t
            uu[r] = best_u
            vv[r] = best_v
    return tri_a, t_a, u_a, v_a
