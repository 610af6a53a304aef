import numpy as np
import pytest
from hypothesis import given, strategies as st

from craftmesh.mesh_core import (
    DegenerateFaceError, DistanceIndex, MeshFormatError, MeshValidationError, TopologyError, TriMesh,
    box, brute_force_distance, column_winding_numbers, concatenate, face_normal, grid_heightfield,
    icosphere, load_mesh, save_mesh, signed_distance, winding_number,
)


def test_minimal_obj(tmp_path):
    p = tmp_path / "tri.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    m = load_mesh(p)
    assert (m.n_vertices, m.n_faces) == (3, 1)


def test_out_of_range_index(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 99\n")
    with pytest.raises(MeshValidationError):
        load_mesh(p)


def test_parse_error_names_line(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 0\n")
    with pytest.raises(MeshFormatError, match=":2:"):
        load_mesh(p)


def test_quads_rejected(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(MeshFormatError):
        load_mesh(p)


def test_negative_indices(tmp_path):
    p = tmp_path / "neg.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n")
    assert load_mesh(p).faces.tolist() == [[0, 1, 2]]


def test_cube_roundtrip_with_uvs(tmp_path):
    b = box()
    uv = np.random.default_rng(0).random((b.n_faces, 3, 2))
    m = TriMesh(b.vertices, b.faces, uv)
    save_mesh(m, tmp_path / "a.obj")
    m2 = load_mesh(tmp_path / "a.obj")
    save_mesh(m2, tmp_path / "b.obj")
    assert (tmp_path / "a.obj").read_bytes() == (tmp_path / "b.obj").read_bytes()
    assert np.array_equal(m2.vertices, m.vertices)
    assert np.array_equal(m2.faces, m.faces)
    assert np.array_equal(m2.uvs, m.uvs)


def test_empty_mesh_roundtrip(tmp_path):
    save_mesh(TriMesh(np.zeros((0, 3)), np.zeros((0, 3), int)), tmp_path / "e.obj")
    m = load_mesh(tmp_path / "e.obj")
    assert (m.n_vertices, m.n_faces) == (0, 0)


def test_single_triangle_uvs_preserved(tmp_path):
    m = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]], [[[0.1, 0.2], [0.9, 0.2], [0.1, 0.8]]])
    save_mesh(m, tmp_path / "t.obj")
    assert np.array_equal(load_mesh(tmp_path / "t.obj").uvs, m.uvs)


def test_vertex_colors_roundtrip(tmp_path):
    s = icosphere(1)
    m = TriMesh(s.vertices, s.faces, vertex_colors=np.random.default_rng(1).random((s.n_vertices, 3)))
    save_mesh(m, tmp_path / "c.obj")
    assert np.array_equal(load_mesh(tmp_path / "c.obj").vertex_colors, m.vertex_colors)


def test_large_roundtrip(tmp_path):
    m = icosphere(5)  # 20480 faces
    m = m.with_vertices(m.vertices * np.pi)
    save_mesh(m, tmp_path / "big.obj")
    m2 = load_mesh(tmp_path / "big.obj")
    assert np.abs(m2.vertices - m.vertices).max() <= 1e-6
    assert np.array_equal(m2.faces, m.faces)


def test_invariants_enforced():
    with pytest.raises(MeshValidationError):
        TriMesh([[0, 0, 0], [1, 0, 0]], [[0, 1, 1]])
    with pytest.raises(MeshValidationError):
        TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]], np.zeros((2, 3, 2)))


def test_face_normal_examples():
    tri = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    assert np.allclose(face_normal(tri, 0), [0, 0, 1], atol=1e-12)
    rev = TriMesh(tri.vertices, [[0, 2, 1]])
    assert np.allclose(face_normal(rev, 0), [0, 0, -1], atol=1e-12)
    t2 = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 1]], [[0, 1, 2]])
    c = np.cross([1, 0, 0], [0, 1, 1])
    assert np.allclose(face_normal(t2, 0), c / np.linalg.norm(c), atol=1e-12)


def test_face_normal_degenerate():
    m = TriMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
    with pytest.raises(DegenerateFaceError):
        face_normal(m, 0)


@given(st.lists(st.floats(-100, 100), min_size=3, max_size=3))
def test_face_normal_translation_invariant(shift):
    m = icosphere(1)
    moved = m.with_vertices(m.vertices + np.array(shift))
    for f in (0, 7, 33):
        assert np.allclose(face_normal(m, f), face_normal(moved, f), atol=1e-9)
        assert abs(np.linalg.norm(face_normal(moved, f)) - 1) <= 1e-9


def test_topology_closed_sphere():
    m = icosphere(2)
    t = m.topology
    assert t.is_closed
    assert t.euler_characteristic(m.n_faces) == 2
    assert len(t.edges) == 3 * m.n_faces // 2


def test_topology_incidence_roundtrip():
    m = grid_heightfield(6, 5, lambda x, y: x * y)
    t = m.topology
    for v in range(m.n_vertices):
        for f in t.vertex_faces(v):
            assert v in m.faces[f]
    counts = np.bincount(m.faces.ravel(), minlength=m.n_vertices)
    assert np.array_equal(np.diff(t.vf_offsets), counts)
    # boundary flag <=> exactly one adjacent face
    assert np.array_equal(t.boundary, t.edge_faces[:, 1] < 0)
    assert t.boundary.sum() == 2 * (5 + 4)


def test_nonmanifold_edge_rejected():
    m = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]], [[0, 1, 2], [1, 0, 3], [0, 1, 4]])
    with pytest.raises(TopologyError):
        m.topology


def test_submesh_and_concatenate():
    a = box()
    b = box((2, 2, 2), (3, 3, 3))
    c = concatenate([a, b])
    assert (c.n_vertices, c.n_faces) == (16, 24)
    sub, used = c.submesh(range(12, 24))
    assert np.array_equal(sub.vertices, b.vertices)
    assert np.array_equal(used, np.arange(8, 16))


def test_sphere_signed_distance_examples():
    m = icosphere(3)
    idx = DistanceIndex(m)
    d, signed = signed_distance(m, idx, np.zeros(3))
    assert signed and abs(d + 1.0) < 5e-3
    d, _ = signed_distance(m, idx, np.array([2.0, 0, 0]))
    assert abs(d - 1.0) < 5e-3
    d, _ = signed_distance(m, idx, m.vertices[17])
    assert abs(d) < 1e-9


def test_signed_distance_open_mesh_flags_unsigned():
    m = grid_heightfield(4, 4, lambda x, y: 0 * x)
    d, signed = signed_distance(m, DistanceIndex(m), np.array([[0, 0, -0.3]]))
    assert not signed and d[0] == pytest.approx(0.3)


def test_signed_distance_empty_mesh_errors():
    m = TriMesh(np.zeros((0, 3)), np.zeros((0, 3), int))
    with pytest.raises(ValueError):
        signed_distance(m, None, np.zeros(3))


def test_bvh_leaves_partition_faces():
    m = icosphere(3)
    leaves = DistanceIndex(m).leaves()
    allf = np.concatenate([np.asarray(l) for l in leaves])
    assert np.array_equal(np.sort(allf), np.arange(m.n_faces))


@given(st.integers(0, 2 ** 31 - 1))
def test_bvh_equals_brute_force(seed):
    rng = np.random.default_rng(seed)
    m = icosphere(2, radius=rng.uniform(0.5, 2))  # 320 faces
    faces = m.faces[: rng.integers(50, 200)]
    m = TriMesh(m.vertices + rng.normal(scale=0.02, size=m.vertices.shape), faces)
    pts = rng.normal(size=(60, 3)) * 1.5
    d, _, q, _ = DistanceIndex(m).query(pts)
    assert np.abs(d - brute_force_distance(m, pts)).max() <= 1e-12
    assert np.allclose(np.linalg.norm(pts - q, axis=1), d, atol=1e-12)


@given(st.integers(0, 2 ** 31 - 1))
def test_winding_sign_inside_outside(seed):
    rng = np.random.default_rng(seed)
    m = icosphere(2)
    m = m.with_vertices(m.vertices * np.array([1.0, 0.6, 0.8]))
    pts = rng.uniform(-1.2, 1.2, size=(200, 3))
    r = np.sqrt(((pts / [1.0, 0.6, 0.8]) ** 2).sum(1))
    # stay clear of the (polyhedral) surface
    inside = r < 0.85
    outside = r > 1.05
    d, _ = signed_distance(m, DistanceIndex(m), pts)
    assert (d[inside] < 0).all() and (d[outside] > 0).all()


def test_column_winding_matches_solid_angle():
    m = concatenate([icosphere(2, 0.4, (0.1, 0, 0)), box((0.6, -0.3, -0.2), (0.9, 0.2, 0.3))])
    xs = np.linspace(-0.7, 1.1, 13)
    ys = np.linspace(-0.6, 0.6, 11)
    zs = np.linspace(-0.6, 0.6, 9)
    cw = column_winding_numbers(m, xs, ys, zs)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    w = winding_number(m, np.stack([X.ravel(), Y.ravel(), Z.ravel()], 1)).reshape(cw.shape)
    assert np.array_equal(cw, np.rint(w).astype(int))


def test_column_winding_on_shared_edges_is_exact():
    # grid lines pass exactly through box edges and vertices
    m = box((-1, -1, -1), (1, 1, 1))
    ax = np.linspace(-2, 2, 9)
    cw = column_winding_numbers(m, ax, ax, ax)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    strict_in = (np.abs(X) < 1) & (np.abs(Y) < 1) & (np.abs(Z) < 1)
    strict_out = (np.abs(X) > 1) | (np.abs(Y) > 1) | (np.abs(Z) > 1)
    assert (cw[strict_in] == 1).all() and (cw[strict_out] == 0).all()
