import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scorecraft.fields import SdfField, field_eval, init_field
from scorecraft.tetra import (TetGrid, TriMesh, bcc_lattice, edge_degrees, euler_characteristic,
                              init_grid_from_field, is_consistently_oriented, marching_tetrahedra,
                              mesh_normals, signed_volume)


def _grid(resolution, fn, extent=1.0):
    pos, tets = bcc_lattice(resolution, extent)
    return TetGrid(pos, fn(pos), np.zeros_like(pos), tets, resolution, extent)


def _sphere_grid(resolution=16, radius=0.8, extent=1.0):
    return _grid(resolution, lambda p: np.linalg.norm(p, axis=1) - radius, extent)


def parity_inside(points, mesh):
    """Odd number of crossings along +x (all triangles, no acceleration)."""
    v = mesh.vertices[mesh.triangles]
    e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
    d = np.array([1.0, 0.2718, 0.1414])
    d /= np.linalg.norm(d)
    p = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, p)
    out = np.zeros(points.shape[0], dtype=bool)
    for i, o in enumerate(points):
        s = o - v[:, 0]
        u = np.einsum("ij,ij->i", s, p) / det
        q = np.cross(s, e1)
        w = q @ d / det
        t = np.einsum("ij,ij->i", e2, q) / det
        out[i] = np.count_nonzero((u >= 0) & (w >= 0) & (u + w <= 1) & (t > 0)) % 2 == 1
    return out


def tet_interpolate(grid, points):
    """Barycentric SDF interpolation inside the containing tetrahedron."""
    pos = grid.deformed()
    corners = pos[grid.tets]
    m = np.transpose(corners[:, 1:] - corners[:, :1], (0, 2, 1))
    inv = np.linalg.inv(m)
    vals = np.full(points.shape[0], np.nan)
    for i, x in enumerate(points):
        lam = np.einsum("tij,tj->ti", inv, x - corners[:, 0])
        bary = np.concatenate([1 - lam.sum(1, keepdims=True), lam], axis=1)
        k = int(np.argmax(bary.min(axis=1)))
        vals[i] = bary[k] @ grid.sdf[grid.tets[k]]
    return vals


def test_lattice_covers_bounding_sphere_and_tets_are_positive():
    pos, tets = bcc_lattice(8, 2.0)
    assert np.allclose(pos.min(0), -2.0) and np.allclose(pos.max(0), 2.0)
    c = pos[tets]
    vol = np.einsum("ij,ij->i", c[:, 1] - c[:, 0], np.cross(c[:, 2] - c[:, 0], c[:, 3] - c[:, 0]))
    assert np.all(np.abs(vol) > 1e-9)
    # the tetrahedra tile the cube exactly
    assert np.sum(np.abs(vol)) / 6 == pytest.approx(4.0 ** 3)


def test_offset_bound_is_half_shortest_edge(rng):
    g = _sphere_grid(8)
    e = g.tets[:, [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]]].reshape(-1, 2)
    shortest = np.min(np.linalg.norm(g.positions[e[:, 0]] - g.positions[e[:, 1]], axis=1))
    assert g.max_offset == pytest.approx(shortest / 2)
    g.offsets = rng.standard_normal(g.offsets.shape)
    g.clamp_offsets()
    assert np.all(np.linalg.norm(g.offsets, axis=1) <= g.max_offset * (1 + 1e-12))


def test_all_positive_gives_empty_mesh():
    assert marching_tetrahedra(_grid(4, lambda p: np.ones(len(p)))).empty


def test_single_negative_vertex_yields_one_separating_triangle():
    pos = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    grid = TetGrid(pos, np.array([-1.0, 1.0, 1.0, 1.0]), np.zeros((4, 3)), np.array([[0, 1, 2, 3]]), 1)
    mesh = marching_tetrahedra(grid)
    assert mesh.triangles.shape == (1, 3)
    np.testing.assert_allclose(np.sort(mesh.vertices, axis=0),
                               [[0, 0, 0], [0, 0, 0], [0.5, 0.5, 0.5]], atol=1e-12)
    v = mesh.vertices[mesh.triangles[0]]
    n = np.cross(v[1] - v[0], v[2] - v[0])
    assert n @ (np.mean(pos[1:], 0) - pos[0]) > 0  # points toward positive SDF


def test_two_negative_vertices_yield_quad():
    pos = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    grid = TetGrid(pos, np.array([-1.0, -1.0, 1.0, 1.0]), np.zeros((4, 3)), np.array([[0, 1, 2, 3]]), 1)
    mesh = marching_tetrahedra(grid)
    assert mesh.triangles.shape == (2, 3) and mesh.vertices.shape == (4, 3)


def test_exact_zero_vertex_is_nudged_outside():
    pos = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    grid = TetGrid(pos, np.array([-1.0, 0.0, 1.0, 1.0]), np.zeros((4, 3)), np.array([[0, 1, 2, 3]]), 1)
    assert marching_tetrahedra(grid).triangles.shape == (1, 3)


def test_sphere_mesh_is_closed_genus_zero():
    mesh = marching_tetrahedra(_sphere_grid(32, 0.8, 2.0))
    _, deg = edge_degrees(mesh.triangles)
    assert np.all(deg == 2)
    assert euler_characteristic(mesh) == 2
    assert is_consistently_oriented(mesh.triangles)
    assert signed_volume(mesh) > 0


def test_torus_mesh_has_genus_one():
    def torus(p):
        return np.sqrt((np.hypot(p[:, 0], p[:, 1]) - 0.55) ** 2 + p[:, 2] ** 2) - 0.25
    mesh = marching_tetrahedra(_grid(24, torus))
    assert np.all(edge_degrees(mesh.triangles)[1] == 2)
    assert euler_characteristic(mesh) == 0


def test_no_degenerate_triangles_and_provenance_exact(rng):
    g = _sphere_grid(12)
    g.offsets = 0.3 * g.max_offset * rng.standard_normal(g.offsets.shape)
    g.clamp_offsets()
    mesh = marching_tetrahedra(g)
    v = mesh.vertices[mesh.triangles]
    area = 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)
    assert np.all(area > 1e-12)
    p = g.deformed()
    assert np.all((mesh.lam >= 0) & (mesh.lam <= 1))
    np.testing.assert_array_equal(mesh.vertices, p[mesh.edge_a] + mesh.lam[:, None] * (p[mesh.edge_b] - p[mesh.edge_a]))
    assert np.all(np.sign(g.sdf[mesh.edge_a]) != np.sign(g.sdf[mesh.edge_b]))


def test_field_init_samples_field_and_zero_offsets():
    sdf, _ = init_field("sphere", {"radius": 0.8}, resolutions=(32,), bias=False)
    grid = init_grid_from_field(sdf, 16)
    assert np.all(grid.offsets == 0)
    np.testing.assert_array_equal(grid.sdf, field_eval(sdf, grid.positions))
    r = np.linalg.norm(grid.positions, axis=1)
    np.testing.assert_allclose(grid.sdf[r < 2.0], r[r < 2.0] - 0.8, atol=np.sqrt(3) * 4 / 32)


def test_field_init_sphere_vertices_within_one_edge_of_surface():
    sdf, _ = init_field("sphere", {"radius": 0.8}, bias=False)
    grid = init_grid_from_field(sdf, 32)
    mesh = marching_tetrahedra(grid)
    edge = np.sqrt(3) / 2 * grid.cell
    assert np.max(np.abs(np.linalg.norm(mesh.vertices, axis=1) - 0.8)) < edge


def test_constant_positive_field_extracts_nothing():
    assert marching_tetrahedra(init_grid_from_field(SdfField([np.full((5, 5, 5), 0.3)]), 8)).empty


def test_sphere_normals_near_radial():
    mesh = marching_tetrahedra(_sphere_grid(32, 0.8, 2.0))
    n = mesh_normals(mesh)
    radial = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1, keepdims=True)
    assert np.degrees(np.arccos(np.clip(np.einsum("ij,ij->i", n, radial), -1, 1))).max() < 10.0


def test_flat_triangle_normals():
    mesh = TriMesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]), np.array([[0, 1, 2]]))
    np.testing.assert_allclose(mesh_normals(mesh), np.tile([0, 0, 1.0], (3, 1)))
    flipped = TriMesh(mesh.vertices, np.array([[0, 2, 1]]))
    np.testing.assert_allclose(mesh_normals(flipped), -mesh_normals(mesh))


def test_flipping_one_triangle_negates_its_contribution(rng):
    v = rng.standard_normal((4, 3))
    f = np.array([[0, 1, 2], [0, 2, 3]])

    def raw(tris):
        acc = np.zeros((4, 3))
        for t in tris:
            acc[t] += np.cross(v[t[1]] - v[t[0]], v[t[2]] - v[t[0]])
        return acc
    a = raw(f)
    b = raw(np.array([[0, 2, 1], [0, 2, 3]]))
    own = np.cross(v[1] - v[0], v[2] - v[0])
    np.testing.assert_allclose(a[0] - b[0], 2 * own)


def test_dangling_vertex_rejected():
    mesh = TriMesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]]), np.array([[0, 1, 2]]))
    with pytest.raises(ValueError, match="dangling vertex"):
        mesh_normals(mesh)


def _random_smooth_sdf(rng):
    centres = rng.uniform(-0.35, 0.35, (3, 3))
    radii = rng.uniform(0.15, 0.4, 3)
    w = rng.standard_normal((3, 3))

    def f(p):
        base = np.min(np.linalg.norm(p[:, None] - centres[None], axis=-1) - radii, axis=1)
        return base + 0.03 * np.sin(p @ w).sum(1)
    return f


@settings(max_examples=10)
@given(st.integers(0, 2**31 - 1))
def test_watertight_and_oriented_for_positive_boundary(seed):
    rng = np.random.default_rng(seed)
    g = _grid(12, _random_smooth_sdf(rng))
    mesh = marching_tetrahedra(g)
    assert not mesh.empty
    assert np.all(edge_degrees(mesh.triangles)[1] == 2)
    assert is_consistently_oriented(mesh.triangles)
    assert signed_volume(mesh) > 0


def test_grid_sign_matches_ray_parity_away_from_mesh(rng):
    g = _sphere_grid(10, 0.55)
    g.sdf = g.sdf + 0.05 * np.sin(3 * g.positions[:, 0])
    mesh = marching_tetrahedra(g)
    edge = np.sqrt(3) / 2 * g.cell
    pts = rng.uniform(-0.95, 0.95, (3000, 3))
    dist = np.min(np.linalg.norm(pts[:, None] - mesh.vertices[None], axis=-1), axis=1)
    pts = pts[dist > edge][:1000]
    assert pts.shape[0] == 1000
    np.testing.assert_array_equal(tet_interpolate(g, pts) < 0, parity_inside(pts, mesh))
