"""Dense multi-resolution grid fields for the implicit stage.

A field is a list of corner grids covering the cube ``[-radius, radius]^3``;
its value at a point is the sum of the trilinear interpolants of all levels.
Points outside the bounding sphere of the same radius are empty space.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import kernels

BOUND_RADIUS = 2.0
OUTSIDE_MARGIN = 0.1
DEFAULT_RESOLUTIONS = (16, 32, 64)
BIAS_AMPLITUDE = 0.5
BIAS_WIDTH = 0.5


@dataclass
class SdfField:
    """Signed distance on summed grid levels; each level is an (n, n, n) array."""

    levels: list
    radius: float = BOUND_RADIUS
    sharpness: float = 64.0
    bias_amplitude: float = 0.0

    @property
    def resolutions(self):
        return [lv.shape[0] - 1 for lv in self.levels]

    def copy(self):
        return SdfField([lv.copy() for lv in self.levels], self.radius,
                        self.sharpness, self.bias_amplitude)


@dataclass
class ColorField:
    """RGB on summed grid levels; each level is an (n, n, n, 3) array."""

    levels: list
    radius: float = BOUND_RADIUS
    background: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))

    @property
    def resolutions(self):
        return [lv.shape[0] - 1 for lv in self.levels]

    def copy(self):
        return ColorField([lv.copy() for lv in self.levels], self.radius,
                          np.array(self.background, dtype=np.float64))


def _check_points(points):
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(pts)):
        raise ValueError("invalid query point")
    return pts


def grid_coords(points, radius, res):
    """Map world points to grid units of a level with ``res`` cells per axis."""
    return (points + radius) * (res / (2.0 * radius))


def corner_positions(res, radius=BOUND_RADIUS):
    """World positions of all (res+1)^3 corners, shaped (n, n, n, 3)."""
    ax = np.linspace(-radius, radius, res + 1)
    return np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)


def inside_mask(points, radius):
    return np.einsum("ij,ij->i", points, points) <= radius * radius


def sdf_eval_grad(sdf, points, backend=None):
    """Values and spatial gradients everywhere, plus the inside-sphere mask.

    Outside the sphere the value is ``|p| - radius + margin`` with gradient
    ``p / |p|``; neither depends on the grid.
    """
    pts = _check_points(points)
    inside = inside_mask(pts, sdf.radius)
    vals = np.empty(pts.shape[0])
    grads = np.empty((pts.shape[0], 3))
    out = ~inside
    if np.any(out):
        norm = np.linalg.norm(pts[out], axis=1)
        vals[out] = norm - sdf.radius + OUTSIDE_MARGIN
        grads[out] = pts[out] / norm[:, None]
    if np.any(inside):
        p = pts[inside]
        v = np.zeros(p.shape[0])
        g = np.zeros((p.shape[0], 3))
        for lv in sdf.levels:
            res = lv.shape[0] - 1
            lv_v, lv_g = kernels.trilerp(lv[..., None], grid_coords(p, sdf.radius, res), backend)
            v += lv_v[:, 0]
            g += lv_g[:, 0, :] * (res / (2.0 * sdf.radius))
        vals[inside] = v
        grads[inside] = g
    return vals, grads, inside


def field_eval(field, points):
    """Evaluate an SdfField (N,) or ColorField (N, 3) at world points."""
    pts = _check_points(points)
    if isinstance(field, SdfField):
        return sdf_eval_grad(field, pts)[0]
    return color_eval(field, pts)[0]


def field_grad(sdf, points):
    """Analytic gradient of the SDF interpolant at points inside the sphere."""
    pts = _check_points(points)
    if not np.all(np.einsum("ij,ij->i", pts, pts) < sdf.radius ** 2):
        raise ValueError("gradient outside domain")
    return sdf_eval_grad(sdf, pts)[1]


def color_eval(color, points, backend=None):
    """Clamped colours and the boolean mask of unclamped channels."""
    pts = _check_points(points)
    inside = inside_mask(pts, color.radius)
    raw = np.tile(np.asarray(color.background, dtype=np.float64), (pts.shape[0], 1))
    if np.any(inside):
        p = pts[inside]
        acc = np.zeros((p.shape[0], 3))
        for lv in color.levels:
            res = lv.shape[0] - 1
            acc += kernels.trilerp(lv, grid_coords(p, color.radius, res), backend)[0]
        raw[inside] = acc
    live = (raw > 0.0) & (raw < 1.0) & inside[:, None]
    return np.clip(raw, 0.0, 1.0), live


def color_jacobian(color, points, backend=None):
    """Spatial Jacobian (N, 3, 3) of the unclamped colour interpolant; rows are channels."""
    pts = _check_points(points)
    inside = inside_mask(pts, color.radius)
    jac = np.zeros((pts.shape[0], 3, 3))
    if np.any(inside):
        p = pts[inside]
        acc = np.zeros((p.shape[0], 3, 3))
        for lv in color.levels:
            res = lv.shape[0] - 1
            acc += kernels.trilerp(lv, grid_coords(p, color.radius, res), backend)[1] * (res / (2.0 * color.radius))
        jac[inside] = acc
    return jac


def sdf_adjoint(sdf, points, d_vals=None, d_grads=None, backend=None):
    """Gradients w.r.t. every SDF level given adjoints of values/world-gradients."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    inside = inside_mask(pts, sdf.radius)
    p = pts[inside]
    dv = None if d_vals is None else np.asarray(d_vals)[inside][:, None]
    out = []
    for lv in sdf.levels:
        res = lv.shape[0] - 1
        scale = res / (2.0 * sdf.radius)
        dg = None if d_grads is None else (np.asarray(d_grads)[inside] * scale)[:, None, :]
        g = kernels.trilerp_adjoint(res + 1, 1, grid_coords(p, sdf.radius, res), dv, dg, backend)
        out.append(g[..., 0])
    return out


def color_adjoint(color, points, d_colors, live, backend=None):
    """Gradients w.r.t. every colour level; clamped channels pass nothing."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    d = np.where(live, d_colors, 0.0)
    keep = np.any(live, axis=1)
    p, d = pts[keep], d[keep]
    out = []
    for lv in color.levels:
        res = lv.shape[0] - 1
        out.append(kernels.trilerp_adjoint(res + 1, 3, grid_coords(p, color.radius, res), d, None, backend))
    return out


# --- analytic primitives -------------------------------------------------

def sphere_sdf(points, radius, center=(0.0, 0.0, 0.0)):
    return np.linalg.norm(points - np.asarray(center, dtype=np.float64), axis=-1) - radius


def torus_sdf(points, major, minor, center=(0.0, 0.0, 0.0), axis="z"):
    q = points - np.asarray(center, dtype=np.float64)
    k = "xyz".index(axis)
    along = q[..., k]
    planar = np.delete(q, k, axis=-1)
    ring = np.linalg.norm(planar, axis=-1) - major
    return np.sqrt(ring ** 2 + along ** 2) - minor


def _primitive_sdf(points, prim):
    kind = prim["kind"]
    center = np.asarray(prim.get("center", (0.0, 0.0, 0.0)), dtype=np.float64)
    if kind == "sphere":
        extent = np.linalg.norm(center) + prim["radius"]
        fn = lambda p: sphere_sdf(p, prim["radius"], center)  # noqa: E731
    elif kind == "torus":
        extent = np.linalg.norm(center) + prim["major"] + prim["minor"]
        fn = lambda p: torus_sdf(p, prim["major"], prim["minor"], center, prim.get("axis", "z"))  # noqa: E731
    else:
        raise ValueError(f"unknown primitive kind {kind!r}")
    if extent > BOUND_RADIUS:
        raise ValueError(f"{kind} primitive exceeds the bounding sphere (extent {extent:.3f} > {BOUND_RADIUS})")
    return fn(points)


def union_sdf(points, primitives):
    return np.min([_primitive_sdf(points, p) for p in primitives], axis=0)


def density_bias(points, amplitude=BIAS_AMPLITUDE, width=BIAS_WIDTH):
    """Negative Gaussian blob at the origin added to optimisation inits."""
    r2 = np.einsum("...i,...i->...", points, points)
    return -amplitude * np.exp(-r2 / (2.0 * width ** 2))


def procedural_texture(points, tint=(0.0, 0.0, 0.0)):
    """Smooth, view-asymmetric albedo used for ground-truth scenes.

    r = 0.5 + 0.3 sin(3x + 0.5) + 0.1 sin(9y) sin(9z)
    g = 0.5 + 0.3 sin(3y + 1.7) + 0.1 sin(9x) sin(9z)
    b = 0.5 + 0.3 cos(3z + 0.3) + 0.1 sin(9x) sin(9y)
    plus a constant tint, clamped to [0.02, 0.98].
    """
    x, y, z = points[..., 0], points[..., 1], points[..., 2]
    r = 0.5 + 0.3 * np.sin(3.0 * x + 0.5) + 0.1 * np.sin(9.0 * y) * np.sin(9.0 * z)
    g = 0.5 + 0.3 * np.sin(3.0 * y + 1.7) + 0.1 * np.sin(9.0 * x) * np.sin(9.0 * z)
    b = 0.5 + 0.3 * np.cos(3.0 * z + 0.3) + 0.1 * np.sin(9.0 * x) * np.sin(9.0 * y)
    rgb = np.stack([r, g, b], axis=-1) + np.asarray(tint)
    return np.clip(rgb, 0.02, 0.98)


GT_SCENES = {
    "textured-sphere": {
        "primitives": [{"kind": "sphere", "radius": 0.45}],
        "tint": (0.0, 0.0, 0.0),
    },
    "torus": {
        # ring stands facing the reference camera (+x), so the hole is visible
        "primitives": [{"kind": "torus", "major": 0.42, "minor": 0.16, "axis": "x"}],
        "tint": (0.05, -0.05, 0.0),
    },
    "asymmetric": {
        "primitives": [
            {"kind": "sphere", "radius": 0.36},
            {"kind": "sphere", "radius": 0.17, "center": (0.22, 0.3, 0.04)},
        ],
        "tint": (-0.05, 0.05, 0.0),
    },
}


def analytic_sdf(kind, params, points):
    """Exact primitive SDF for an ``init_field`` kind (no grid, no bias)."""
    if kind == "sphere":
        return _primitive_sdf(points, {"kind": "sphere", **params})
    if kind == "torus":
        return _primitive_sdf(points, {"kind": "torus", **params})
    if kind == "union":
        return union_sdf(points, params["primitives"])
    if kind == "gt-scene":
        return union_sdf(points, _scene(params)["primitives"])
    raise ValueError(f"unknown field kind {kind!r}")


def _scene(params):
    name = params["scene"]
    if name not in GT_SCENES:
        raise ValueError(f"unknown ground-truth scene {name!r}")
    return GT_SCENES[name]


def init_field(kind, params=None, resolutions=DEFAULT_RESOLUTIONS, bias=None,
               sharpness=64.0, radius=BOUND_RADIUS):
    """Build an (SdfField, ColorField) pair.

    Args:
        kind: ``sphere``, ``torus``, ``union`` or ``gt-scene``.
        params: primitive parameters (``radius``/``center``; ``major``/``minor``/
            ``axis``; ``primitives`` list; or ``scene`` name).
        resolutions: cells per axis for each level, coarse to fine.
        bias: add the density bias blob. Defaults to True for optimisation
            inits and False for ground-truth scenes.

    The analytic distance (plus bias) is stored in the finest level; coarser
    levels start at zero. Ground-truth scenes carry the procedural texture in
    the finest colour level; optimisation inits a flat 0.5 grey in the coarsest.
    """
    params = dict(params or {})
    if bias is None:
        bias = kind != "gt-scene"
    fine = max(resolutions)
    pos = corner_positions(fine, radius)
    values = analytic_sdf(kind, params, pos)
    if bias:
        values = values + density_bias(pos)
    sdf_levels = [np.zeros((r + 1,) * 3) for r in resolutions]
    color_levels = [np.zeros((r + 1,) * 3 + (3,)) for r in resolutions]
    fi = list(resolutions).index(fine)
    sdf_levels[fi] = values
    if kind == "gt-scene":
        color_levels[fi] = procedural_texture(pos, _scene(params)["tint"])
    else:
        color_levels[int(np.argmin(resolutions))][...] = 0.5
    sdf = SdfField(sdf_levels, radius, sharpness, BIAS_AMPLITUDE if bias else 0.0)
    return sdf, ColorField(color_levels, radius)


def field_to_arrays(prefix, sdf, color):
    arrays = {}
    for i, lv in enumerate(sdf.levels):
        arrays[f"{prefix}sdf/{i}"] = lv
    for i, lv in enumerate(color.levels):
        arrays[f"{prefix}color/{i}"] = lv
    meta = {
        "levels": len(sdf.levels),
        "resolutions": sdf.resolutions,
        "radius": sdf.radius,
        "sharpness": sdf.sharpness,
        "bias_amplitude": sdf.bias_amplitude,
        "background": [float(x) for x in color.background],
    }
    return arrays, meta


def field_from_arrays(prefix, arrays, meta):
    n = meta["levels"]
    sdf = SdfField([arrays[f"{prefix}sdf/{i}"] for i in range(n)], meta["radius"],
                   meta["sharpness"], meta["bias_amplitude"])
    color = ColorField([arrays[f"{prefix}color/{i}"] for i in range(n)], meta["radius"],
                       np.array(meta["background"]))
    return sdf, color


def save_fields(path, sdf, color):
    """Checkpoint a field pair in the binary container (see :mod:`scorecraft.io`)."""
    from .io import write_container

    arrays, meta = field_to_arrays("", sdf, color)
    write_container(path, arrays, {"field": meta})


def load_fields(path):
    from .io import read_container

    arrays, docs = read_container(path)
    return field_from_arrays("", arrays, docs["field"])
