"""Hard ray-cast rendering of a TriMesh with a 3D texture grid.

Each pixel takes the nearest Moller-Trumbore hit. The mask is exactly 0 or 1,
depth is the hit distance and normals are the flat face normals. In ``rgb``
mode colour is the texture sampled at the hit point, in ``normal-map`` mode
it is ``(n + 1) / 2`` and in ``lambertian`` mode a white surface shaded by the
camera's point light.

Reverse mode covers the texture grid (always) and vertex positions (fixed
topology). A hit point moves with the triangle only through the hit distance;
for barycentrics ``b_k`` and face normal ``n``, ``dt/dv_k = b_k n / (d . n)``.
Pixels on the silhouette (a 4-neighbour misses) contribute no vertex gradient.
"""

import numpy as np

from .camera import generate_rays
from .fields import color_adjoint, color_eval, color_jacobian
from .image import RenderOutput, check_adjoint
from .kernels import cast_rays

MODES = ("rgb", "normal-map", "lambertian")
AMBIENT = 0.3


def _light_dir(camera, points):
    light = np.asarray(camera.light, dtype=np.float64)
    if not np.any(light):
        light = np.asarray(camera.position, dtype=np.float64)
    d = light[None, :] - points
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def silhouette(mask):
    """Covered pixels with at least one uncovered 4-neighbour (or on the border)."""
    m = np.asarray(mask) > 0.5
    pad = np.pad(m, 1, constant_values=False)
    interior = pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:]
    return m & ~interior


def render_mesh(mesh, texture, camera, mode="rgb", background=(1.0, 1.0, 1.0), bvh=None):
    return render_mesh_with_vjp(mesh, texture, camera, mode, background, bvh)[0]


def render_mesh_vjp(mesh, texture, camera, adjoint, wrt="texture", mode="rgb",
                    background=(1.0, 1.0, 1.0)):
    return render_mesh_with_vjp(mesh, texture, camera, mode, background)[1](adjoint, wrt)


def render_mesh_with_vjp(mesh, texture, camera, mode="rgb", background=(1.0, 1.0, 1.0), bvh=None):
    if mode not in MODES:
        raise ValueError(f"unknown render mode {mode!r}")
    h, w = camera.height, camera.width
    bg = np.asarray(background, dtype=np.float64)
    origins, dirs = generate_rays(camera)
    verts, faces = mesh.vertices, mesh.triangles
    v0, v1, v2 = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    tri, t, bu, bv = cast_rays(origins, dirs, v0, v1, v2, bvh)
    hit = tri >= 0
    idx = np.flatnonzero(hit)
    ft = tri[idx]
    th = t[idx]
    d = dirs[idx]
    pts = origins[idx] + th[:, None] * d

    e1 = (v1 - v0)[ft]
    e2 = (v2 - v0)[ft]
    fn = np.cross(e1, e2)
    fn_len = np.linalg.norm(fn, axis=1)
    nhat = fn / fn_len[:, None]

    rgb = np.tile(bg, (h * w, 1))
    live = None
    light = None
    ndl = None
    if mode == "rgb":
        col, live = color_eval(texture, pts)
        rgb[idx] = col
    elif mode == "normal-map":
        rgb[idx] = 0.5 * (nhat + 1.0)
    else:
        light = _light_dir(camera, pts)
        ndl = np.einsum("ij,ij->i", nhat, light)
        rgb[idx] = (AMBIENT + (1.0 - AMBIENT) * np.clip(ndl, 0.0, None))[:, None]
    depth = np.zeros(h * w)
    depth[idx] = th
    normal = np.zeros((h * w, 3))
    normal[idx] = nhat
    mask = hit.astype(np.float64)

    out = RenderOutput(rgb=rgb.reshape(h, w, 3), depth=depth.reshape(h, w),
                       normal=normal.reshape(h, w, 3), mask=mask.reshape(h, w))

    def vjp(adjoint, wrt="texture"):
        adj = check_adjoint(adjoint, h, w)
        a_rgb = adj.get("rgb", np.zeros((h, w, 3))).reshape(-1, 3)[idx]
        if wrt == "texture":
            if mode != "rgb":
                return [np.zeros_like(lv) for lv in texture.levels]
            return color_adjoint(texture, pts, a_rgb, live)
        if wrt != "vertices":
            raise ValueError(f"cannot differentiate with respect to {wrt!r}")
        g_verts = np.zeros_like(verts)
        if idx.size == 0:
            return g_verts
        keep = ~silhouette(out.mask).reshape(-1)[idx]
        a_depth = adj.get("depth", np.zeros((h, w))).reshape(-1)[idx]
        a_norm = adj.get("normal", np.zeros((h, w, 3))).reshape(-1, 3)[idx]

        g_t = a_depth.copy()
        g_n = a_norm.copy()
        if mode == "rgb":
            jac = color_jacobian(texture, pts)
            g_p = np.einsum("nc,ncj->nj", np.where(live, a_rgb, 0.0), jac)
            g_t += np.einsum("nj,nj->n", g_p, d)
        elif mode == "normal-map":
            g_n += 0.5 * a_rgb
        else:
            lit = (ndl > 0.0)[:, None]
            g_n += np.where(lit, (1.0 - AMBIENT) * a_rgb.sum(axis=1, keepdims=True) * light, 0.0)
            # the light direction also moves with the hit point
            g_l = np.where(lit, (1.0 - AMBIENT) * a_rgb.sum(axis=1, keepdims=True) * nhat, 0.0)
            dist = np.linalg.norm(
                (np.asarray(camera.light) if np.any(camera.light) else np.asarray(camera.position))[None, :] - pts,
                axis=1)
            g_pl = -(g_l - light * np.einsum("nj,nj->n", g_l, light)[:, None]) / dist[:, None]
            g_t += np.einsum("nj,nj->n", g_pl, d)
        g_t = np.where(keep, g_t, 0.0)
        g_n = np.where(keep[:, None], g_n, 0.0)

        # through the hit distance: dt/dv_k = b_k n / (d . n)
        dn = np.einsum("ij,ij->i", d, fn)
        base = (g_t / dn)[:, None] * fn
        b1, b2 = bu[idx], bv[idx]
        b0 = 1.0 - b1 - b2
        # through the unit face normal
        hvec = (g_n - nhat * np.einsum("ij,ij->i", nhat, g_n)[:, None]) / fn_len[:, None]
        g_e1 = np.cross(e2, hvec)
        g_e2 = np.cross(hvec, e1)
        contrib = [b0[:, None] * base - g_e1 - g_e2, b1[:, None] * base + g_e1, b2[:, None] * base + g_e2]
        for k in range(3):
            vid = faces[ft, k]
            for c in range(3):
                g_verts[:, c] += np.bincount(vid, weights=contrib[k][:, c], minlength=verts.shape[0])
        return g_verts

    return out, vjp
