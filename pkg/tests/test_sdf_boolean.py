import numpy as np
import pytest
from hypothesis import given, strategies as st

from craftmesh.mesh_core import DistanceIndex, TriMesh, box, brute_force_distance, concatenate, icosphere
from craftmesh.sdf_boolean import (
    BooleanOp, GridLayoutError, RegionSelection, SdfGrid, classify_new_vs_preserved, combine,
    count_components, empty_like, extract_regions, extract_seam, marching_cubes, padded_bounds, sample_sdf,
)


def sphere_grid(res, center=(0, 0, 0), r=1.0, lo=-1.5, hi=1.5):
    spacing = (hi - lo) / res
    ax = lo + spacing * np.arange(res + 1)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    c = np.asarray(center)
    d = np.sqrt((X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2) - r
    return SdfGrid(np.full(3, lo), spacing, d)


def mc_radius_error(res):
    g = sphere_grid(res)
    m, _ = marching_cubes(g)
    return np.abs(np.linalg.norm(m.vertices, axis=1) - 1).max(), g.spacing


def euler(m):
    return m.topology.euler_characteristic(m.n_faces)


@pytest.fixture(scope="module")
def sphere32():
    m = icosphere(3)
    idx = DistanceIndex(m)
    return m, idx, sample_sdf(m, idx, ([-1.5] * 3, [1.5] * 3), 32)


def test_sample_sdf_center_and_corner(sphere32):
    _, _, g = sphere32
    assert abs(g.values[16, 16, 16] + 1.0) < g.spacing
    far = np.linalg.norm(g.origin) - 1.0
    assert g.values[0, 0, 0] > 0 and abs(g.values[0, 0, 0] - far) < g.spacing


def test_sample_sdf_equals_pointwise_distance(sphere32):
    m, idx, g = sphere32
    pts = g.points()
    sel = np.random.default_rng(0).choice(len(pts), 300, replace=False)
    d = brute_force_distance(m, pts[sel])
    assert np.abs(np.abs(g.values.reshape(-1)[sel]) - d).max() <= 1e-9


def test_sample_sdf_translation_equivariant(sphere32):
    m, _, g = sphere32
    t = np.array([0.25, -0.5, 0.125])
    moved = m.with_vertices(m.vertices + t)
    g2 = sample_sdf(moved, DistanceIndex(moved), ([-1.5 + t[0], -1.5 + t[1], -1.5 + t[2]],
                                                   [1.5 + t[0], 1.5 + t[1], 1.5 + t[2]]), 32)
    assert np.abs(g2.values - g.values).max() <= 1e-12


def test_sample_sdf_band_clamps_only_far_values(sphere32):
    m, idx, g = sphere32
    band = 4 * g.spacing
    gb = sample_sdf(m, idx, ([-1.5] * 3, [1.5] * 3), 32, band=band)
    assert np.array_equal(np.sign(gb.values), np.sign(g.values))
    assert np.allclose(gb.values, np.clip(g.values, -band, band), atol=1e-12)


def test_sample_sdf_rejects_open_mesh_and_tight_bounds():
    tri = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    with pytest.raises(ValueError):
        sample_sdf(tri, DistanceIndex(tri), ([-1] * 3, [2] * 3), 16)
    m = icosphere(1)
    with pytest.raises(ValueError):
        sample_sdf(m, DistanceIndex(m), ([-1.01] * 3, [1.01] * 3), 16)


def test_padded_bounds_margin():
    m = icosphere(2)
    lo, hi = padded_bounds([m], 64)
    spacing = (hi - lo).max() / 64
    mlo, mhi = m.bounds()
    assert ((mlo - lo) >= 2 * spacing).all() and ((hi - mhi) >= 2 * spacing).all()


def test_combine_examples():
    a = sphere_grid(16)
    assert np.array_equal(combine(a, a, "union").values, a.values)
    assert np.array_equal(combine(a, empty_like(a), BooleanOp.DIFFERENCE).values, a.values)
    with pytest.raises(GridLayoutError):
        combine(a, sphere_grid(17), "union")


@given(st.integers(0, 2**31 - 1))
def test_combine_pointwise(seed):
    rng = np.random.default_rng(seed)
    a = SdfGrid(np.zeros(3), 0.1, rng.normal(size=(4, 5, 3)))
    b = SdfGrid(np.zeros(3), 0.1, rng.normal(size=(4, 5, 3)))
    assert np.array_equal(combine(a, b, "union").values, np.minimum(a.values, b.values))
    assert np.array_equal(combine(a, b, "difference").values, np.maximum(a.values, -b.values))


def test_union_two_spheres_two_components():
    spacing = 0.1
    ax = -3.5 + spacing * np.arange(71)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    da = np.sqrt((X - 2) ** 2 + Y ** 2 + Z ** 2) - 1
    db = np.sqrt((X + 2) ** 2 + Y ** 2 + Z ** 2) - 1
    a, b = SdfGrid(np.full(3, -3.5), spacing, da), SdfGrid(np.full(3, -3.5), spacing, db)
    m, touches = marching_cubes(combine(a, b, "union"))
    assert not touches and count_components(m) == 2


def test_mc_empty_and_single_corner():
    m, _ = marching_cubes(SdfGrid(np.zeros(3), 1.0, np.ones((4, 4, 4))))
    assert m.n_faces == 0
    v = np.ones((4, 4, 4))
    v[1, 2, 1] = -1
    m, touches = marching_cubes(SdfGrid(np.zeros(3), 1.0, v))
    assert m.n_faces > 0 and not touches
    assert m.topology.is_closed and euler(m) == 2


def test_mc_sphere_64():
    g = sphere_grid(64)
    m, touches = marching_cubes(g)
    assert not touches
    assert np.abs(np.linalg.norm(m.vertices, axis=1) - 1).max() < 2 * g.spacing
    assert m.topology.is_closed and euler(m) == 2
    # outward orientation: positive enclosed volume
    tri = m.vertices[m.faces]
    vol = np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6
    assert vol == pytest.approx(4 / 3 * np.pi, rel=0.02)


def test_mc_boundary_flag():
    with pytest.warns(UserWarning):
        _, touches = marching_cubes(sphere_grid(16, r=1.6))
    assert touches


@pytest.mark.xfail(strict=True, reason="linear MC on the analytic sphere converges faster than "
                   "first order (ratio ~0.27), outside the stated halving band")
def test_mc_first_order_halving_band():
    e32, _ = mc_radius_error(32)
    e64, _ = mc_radius_error(64)
    assert 0.35 <= e64 / e32 <= 0.65


def test_mc_error_does_not_grow_with_resolution():
    e32, _ = mc_radius_error(32)
    e64, _ = mc_radius_error(64)
    assert e64 / e32 <= 0.65


def test_union_matches_parts_away_from_seam():
    spacing = 0.05
    lo = -1.6
    ax = lo + spacing * np.arange(int(round(3.4 / spacing)) + 1)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    ca, cb = np.array([-0.4, 0, 0]), np.array([0.4, 0, 0])
    da = np.sqrt((X - ca[0]) ** 2 + Y ** 2 + Z ** 2) - 0.8
    db = np.sqrt((X - cb[0]) ** 2 + Y ** 2 + Z ** 2) - 0.8
    a, b = SdfGrid(np.full(3, lo), spacing, da), SdfGrid(np.full(3, lo), spacing, db)
    mu, _ = marching_cubes(combine(a, b, "union"))
    ma, _ = marching_cubes(a)
    mb, _ = marching_cubes(b)
    parts = concatenate([ma, mb])
    rng = np.random.default_rng(1)
    f = rng.integers(0, mu.n_faces, 1000)
    w = rng.dirichlet(np.ones(3), 1000)
    pts = np.einsum("ij,ijk->ik", w, mu.vertices[mu.faces[f]])
    away = np.abs(pts[:, 0]) > 0.3  # seam circle lies at x = 0
    d, _, _, _ = DistanceIndex(parts).query(pts[away])
    assert d.max() <= 2 * spacing


def test_extract_seam_examples():
    spacing = 0.05
    lo = -2.0
    ax = lo + spacing * np.arange(81)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    da = np.sqrt((X + 0.5) ** 2 + Y ** 2 + Z ** 2) - 1
    db = np.sqrt((X - 0.5) ** 2 + Y ** 2 + Z ** 2) - 1
    a, b = SdfGrid(np.full(3, lo), spacing, da), SdfGrid(np.full(3, lo), spacing, db)
    merged, _ = marching_cubes(combine(a, b, "union"))
    tau = 2 * spacing
    seam = extract_seam(a, b, merged, tau)
    assert len(seam) > 0
    rad = np.hypot(seam[:, 1], seam[:, 2])
    tol = 2 * spacing + tau
    assert np.abs(seam[:, 0]).max() <= tol
    assert np.abs(rad - np.sqrt(0.75)).max() <= tol
    assert len(extract_seam(a, b, merged, 0.0)) == 0
    # disjoint spheres
    far = SdfGrid(np.full(3, lo), spacing, np.sqrt((X - 3.5) ** 2 + Y ** 2 + Z ** 2) - 0.3)
    m2, _ = marching_cubes(combine(a, far, "union"))
    assert len(extract_seam(a, far, m2, tau)) == 0


def _line_mesh():
    V = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]], float)
    return TriMesh(V, np.zeros((0, 3), np.int64))


def test_extract_regions_examples():
    m = _line_mesh()
    r = extract_regions(m, m, np.zeros((1, 3)), 2.5, 1.5)
    assert r.t_in.tolist() == [0, 1, 2] and r.t_opt.tolist() == [0, 1]
    r = extract_regions(m, m, np.zeros((0, 3)), 2.5, 1.5)
    assert r.t_in.size == r.e_in.size == r.t_opt.size == 0
    with pytest.raises(ValueError):
        extract_regions(m, m, np.zeros((1, 3)), 1.0, 1.0)


@given(st.integers(0, 2**31 - 1), st.floats(0.05, 0.5), st.floats(0.1, 0.9))
def test_extract_regions_brute_force_and_permutation(seed, eps0, frac):
    rng = np.random.default_rng(seed)
    mt = TriMesh(rng.uniform(-1, 1, (80, 3)), np.zeros((0, 3), np.int64))
    me = TriMesh(rng.uniform(-1, 1, (60, 3)), np.zeros((0, 3), np.int64))
    seam = rng.uniform(-1, 1, (7, 3))
    eps1 = eps0 * frac
    r = extract_regions(mt, me, seam, eps0, eps1)
    dt = np.linalg.norm(mt.vertices[:, None] - seam[None], axis=2).min(1)
    de = np.linalg.norm(me.vertices[:, None] - seam[None], axis=2).min(1)
    assert r.t_in.tolist() == np.flatnonzero(dt < eps0).tolist()
    assert r.e_in.tolist() == np.flatnonzero(de < eps0).tolist()
    assert r.t_opt.tolist() == np.flatnonzero(dt < eps1).tolist()
    assert np.isin(r.t_opt, r.t_in).all()
    r2 = extract_regions(mt, me, seam[rng.permutation(7)], eps0, eps1)
    assert np.array_equal(r.t_in, r2.t_in) and np.array_equal(r.t_opt, r2.t_opt)


def test_region_selection_json_roundtrip(tmp_path):
    r = RegionSelection(np.ones((2, 3)), [3, 1, 2], [0], [1], 0.2, 0.1, [0, 1], [2, 3])
    r.save(tmp_path / "r.json")
    r2 = RegionSelection.load(tmp_path / "r.json")
    assert r2.t_in.tolist() == [1, 2, 3] and r2.new_faces.tolist() == [0, 1]
    with pytest.raises(ValueError):
        RegionSelection(np.zeros((0, 3)), [1], [], [2], 0.2, 0.1)


def test_classify_examples():
    s = icosphere(2)
    new, pr = classify_new_vs_preserved(s, s, 1e-6)
    assert new.size == 0 and pr.size == s.n_faces
    merged = concatenate([s, box((5, 5, 5), (6, 6, 6))])
    new, pr = classify_new_vs_preserved(merged, s, 0.01)
    assert new.tolist() == list(range(s.n_faces, merged.n_faces))


def test_classify_bump_against_hand_labels():
    # 80-face sphere with its +z cap pushed out: hand label = faces touching the moved vertex
    s = icosphere(1)
    top = int(np.argmax(s.vertices[:, 2]))
    V = s.vertices.copy()
    V[top] *= 1.5
    bump = TriMesh(V, s.faces)
    new, pr = classify_new_vs_preserved(bump, s, 0.05)
    expected = np.flatnonzero((s.faces == top).any(1))
    assert new.tolist() == expected.tolist()
    assert len(new) + len(pr) == s.n_faces
