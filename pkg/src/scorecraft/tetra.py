"""Deformable tetrahedral grid and marching tetrahedra.

The lattice is body-centred cubic: the (R+1)^3 cube corners plus the R^3 cube
centres. Every face between two cubes forms an octahedron with the two
centres, split into four tetrahedra around the centre-centre axis; faces on
the lattice boundary form a pyramid with their single centre, split into two.

Surface vertices sit at the linear zero of the SDF along crossing edges of
the deformed lattice. Triangles are oriented so their normals point toward
positive SDF.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .fields import BOUND_RADIUS, field_eval

ZERO_NUDGE = 1e-9
TET_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])


@dataclass
class TetGrid:
    positions: np.ndarray   # (V, 3) rest positions
    sdf: np.ndarray         # (V,)
    offsets: np.ndarray     # (V, 3)
    tets: np.ndarray        # (T, 4)
    resolution: int
    extent: float = BOUND_RADIUS

    @property
    def cell(self):
        return 2.0 * self.extent / self.resolution

    @property
    def max_offset(self):
        # half the shortest lattice edge (corner-to-centre, sqrt(3)/2 of a cell)
        return 0.25 * np.sqrt(3.0) * self.cell

    def deformed(self):
        return self.positions + self.offsets

    def clamp_offsets(self):
        """Project offsets into the ball of radius ``max_offset``."""
        norm = np.linalg.norm(self.offsets, axis=1, keepdims=True)
        scale = np.minimum(1.0, self.max_offset / np.maximum(norm, 1e-300))
        self.offsets = self.offsets * scale

    def copy(self):
        return TetGrid(self.positions, self.sdf.copy(), self.offsets.copy(), self.tets,
                       self.resolution, self.extent)


@dataclass
class TriMesh:
    vertices: np.ndarray    # (V, 3)
    triangles: np.ndarray   # (F, 3)
    edge_a: np.ndarray = None   # (V,) lattice vertex at lambda = 0
    edge_b: np.ndarray = None   # (V,) lattice vertex at lambda = 1
    lam: np.ndarray = None      # (V,)

    @property
    def empty(self):
        return self.triangles.shape[0] == 0


@lru_cache(maxsize=8)
def bcc_lattice(resolution, extent=BOUND_RADIUS):
    """Rest positions (V, 3) and tetrahedra (T, 4) of the BCC lattice."""
    r = int(resolution)
    n = r + 1
    h = 2.0 * extent / r
    ax = -extent + h * np.arange(n)
    corners = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1).reshape(-1, 3)
    cx = -extent + h * (np.arange(r) + 0.5)
    centres = np.stack(np.meshgrid(cx, cx, cx, indexing="ij"), -1).reshape(-1, 3)
    n_corner = corners.shape[0]

    def cid(i, j, k):
        return (i * n + j) * n + k

    def mid(i, j, k):
        return n_corner + (i * r + j) * r + k

    tets = []
    for axis in range(3):
        # face index along ``axis`` (0..r) and the two in-face cell indices (0..r-1)
        fi, a, b = np.meshgrid(np.arange(n), np.arange(r), np.arange(r), indexing="ij")
        fi, a, b = fi.ravel(), a.ravel(), b.ravel()

        def put(x, p, q):
            idx = [None, None, None]
            idx[axis] = x
            others = [d for d in range(3) if d != axis]
            idx[others[0]] = p
            idx[others[1]] = q
            return idx

        quad = [cid(*put(fi, a, b)), cid(*put(fi, a + 1, b)),
                cid(*put(fi, a + 1, b + 1)), cid(*put(fi, a, b + 1))]
        quad = np.stack(quad, axis=1)
        lower = fi - 1  # cube behind the face
        upper = fi      # cube in front
        interior = (fi > 0) & (fi < r)
        ci = np.flatnonzero(interior)
        c_lo = mid(*put(lower[ci], a[ci], b[ci]))
        c_hi = mid(*put(upper[ci], a[ci], b[ci]))
        for m in range(4):
            tets.append(np.stack([c_lo, c_hi, quad[ci, m], quad[ci, (m + 1) % 4]], axis=1))
        for side, cube in ((0, upper), (r, lower)):
            bi = np.flatnonzero(fi == side)
            c = mid(*put(cube[bi], a[bi], b[bi]))
            q = quad[bi]
            tets.append(np.stack([c, q[:, 0], q[:, 1], q[:, 2]], axis=1))
            tets.append(np.stack([c, q[:, 0], q[:, 2], q[:, 3]], axis=1))

    positions = np.concatenate([corners, centres])
    positions.setflags(write=False)
    tet_arr = np.concatenate(tets).astype(np.int64)
    tet_arr.setflags(write=False)
    return positions, tet_arr


def init_grid_from_field(sdf_field, resolution=32, extent=BOUND_RADIUS):
    """Sample an SdfField at the lattice vertices; offsets start at zero."""
    positions, tets = bcc_lattice(int(resolution), float(extent))
    values = field_eval(sdf_field, positions)
    return TetGrid(positions, values, np.zeros_like(positions), tets, int(resolution), float(extent))


def _case_table():
    """Per sign code (bit i set = vertex i inside), up to two triangles of tet edges."""
    edge_id = {tuple(e): k for k, e in enumerate(TET_EDGES.tolist())}

    def e(u, v):
        return edge_id[(min(u, v), max(u, v))]

    table = np.full((16, 2, 3), -1, dtype=np.int64)
    for code in range(16):
        ins = [i for i in range(4) if code >> i & 1]
        outs = [i for i in range(4) if not code >> i & 1]
        if len(ins) in (1, 3):
            lone, rest = (ins[0], outs) if len(ins) == 1 else (outs[0], ins)
            table[code, 0] = [e(lone, rest[0]), e(lone, rest[1]), e(lone, rest[2])]
        elif len(ins) == 2:
            a, b = ins
            c, d = outs
            # quad ac - ad - bd - bc split along ac-bd
            table[code, 0] = [e(a, c), e(a, d), e(b, d)]
            table[code, 1] = [e(a, c), e(b, d), e(b, c)]
    return table


CASES = _case_table()


def marching_tetrahedra(grid):
    """Extract the zero level set of a TetGrid as an oriented TriMesh."""
    sdf = np.where(grid.sdf == 0.0, ZERO_NUDGE, grid.sdf)
    pos = grid.deformed()
    tets = grid.tets
    inside = sdf[tets] < 0.0
    code = (inside * (1 << np.arange(4))).sum(axis=1)
    keep = (code != 0) & (code != 15)
    tets, code, inside = tets[keep], code[keep], inside[keep]
    empty = TriMesh(np.zeros((0, 3)), np.zeros((0, 3), np.int64),
                    np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
    if tets.shape[0] == 0:
        return empty

    # global crossing edges -> welded mesh vertices
    ea = tets[:, TET_EDGES[:, 0]]
    eb = tets[:, TET_EDGES[:, 1]]
    lo, hi = np.minimum(ea, eb), np.maximum(ea, eb)
    n_vert = grid.positions.shape[0]
    keys = lo * n_vert + hi
    tri_local = CASES[code]                          # (T, 2, 3) local edge ids
    valid = tri_local[:, :, 0] >= 0
    tet_idx = np.repeat(np.arange(tets.shape[0]), 2).reshape(-1, 2)[valid]
    local = tri_local[valid]                         # (F, 3)
    tri_keys = keys[tet_idx[:, None], local]         # (F, 3)
    uniq, inv = np.unique(tri_keys.ravel(), return_inverse=True)
    tris = inv.reshape(-1, 3)

    a = uniq // n_vert
    b = uniq % n_vert
    sa, sb = sdf[a], sdf[b]
    lam = sa / (sa - sb)
    verts = pos[a] + lam[:, None] * (pos[b] - pos[a])

    # orient toward positive SDF: compare with (mean outside - mean inside) of the source tet
    tp = pos[tets[tet_idx]]                          # (F, 4, 3)
    tin = inside[tet_idx][..., None]
    n_in = tin.sum(axis=1)
    dirn = (tp * ~tin).sum(axis=1) / (4 - n_in) - (tp * tin).sum(axis=1) / n_in
    v0, v1, v2 = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    normal = np.cross(v1 - v0, v2 - v0)
    flip = np.einsum("ij,ij->i", normal, dirn) < 0.0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return TriMesh(verts, tris, a, b, lam)


def mesh_normals(mesh):
    """Area-weighted vertex normals (unit length)."""
    if mesh.empty:
        raise ValueError("mesh is empty")
    v, f = mesh.vertices, mesh.triangles
    fn = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    acc = np.zeros_like(v)
    for k in range(3):
        np.add.at(acc, f[:, k], fn)
    used = np.zeros(v.shape[0], dtype=bool)
    used[f.ravel()] = True
    if not used.all():
        raise ValueError("dangling vertex")
    length = np.linalg.norm(acc, axis=1, keepdims=True)
    return acc / np.maximum(length, 1e-300)


def vertex_adjoint(grid, mesh, d_vertices):
    """Chain vertex-position gradients back to lattice SDF values and offsets.

    With P = rest + offset and v = P_a + lam (P_b - P_a), lam = s_a / (s_a - s_b).
    """
    a, b, lam = mesh.edge_a, mesh.edge_b, mesh.lam
    sdf = np.where(grid.sdf == 0.0, ZERO_NUDGE, grid.sdf)
    pos = grid.deformed()
    sa, sb = sdf[a], sdf[b]
    span = pos[b] - pos[a]
    g_lam = np.einsum("ij,ij->i", d_vertices, span)
    den = (sa - sb) ** 2
    n_vert = grid.positions.shape[0]
    d_sdf = (np.bincount(a, weights=g_lam * (-sb / den), minlength=n_vert)
             + np.bincount(b, weights=g_lam * (sa / den), minlength=n_vert))
    d_off = np.zeros((n_vert, 3))
    for c in range(3):
        d_off[:, c] = (np.bincount(a, weights=(1.0 - lam) * d_vertices[:, c], minlength=n_vert)
                       + np.bincount(b, weights=lam * d_vertices[:, c], minlength=n_vert))
    return d_sdf, d_off


def edge_degrees(triangles):
    """Map each undirected edge to the number of triangles using it."""
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e = np.sort(e, axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    return uniq, counts


def signed_volume(mesh):
    v, f = mesh.vertices, mesh.triangles
    return float(np.einsum("ij,ij->i", v[f[:, 0]], np.cross(v[f[:, 1]], v[f[:, 2]])).sum() / 6.0)


def is_consistently_oriented(triangles):
    """Every directed edge appears once and its reverse once."""
    d = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    uniq, counts = np.unique(d, axis=0, return_counts=True)
    if np.any(counts != 1):
        return False
    rev = {tuple(x) for x in uniq[:, ::-1].tolist()}
    return rev == {tuple(x) for x in uniq.tolist()}


def euler_characteristic(mesh):
    edges, _ = edge_degrees(mesh.triangles)
    return mesh.vertices.shape[0] - edges.shape[0] + mesh.triangles.shape[0]


def grid_to_arrays(grid, prefix="tet/"):
    """Arrays and metadata for a TetGrid (rest positions/tets are rebuilt on load)."""
    arrays = {f"{prefix}sdf": grid.sdf, f"{prefix}offsets": grid.offsets}
    meta = {"resolution": grid.resolution, "extent": grid.extent}
    return arrays, meta


def grid_from_arrays(arrays, meta, prefix="tet/"):
    positions, tets = bcc_lattice(int(meta["resolution"]), float(meta["extent"]))
    return TetGrid(positions, arrays[f"{prefix}sdf"], arrays[f"{prefix}offsets"], tets,
                   int(meta["resolution"]), float(meta["extent"]))
