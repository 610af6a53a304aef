import numpy as np
import pytest
from hypothesis import given, strategies as st

from craftmesh.fixtures import bump_scene, random_surface, ridge_scene
from craftmesh.geo_fusion import (
    EmptyTargetError, FaceTargets, FusionConfig, LossScales, blend_view, stable_step, compute_blended_targets,
    fuse_geometry, max_seam_dihedral, normal_loss_and_grad, region_edge_lengths, remesh_region,
    smoothness_loss_and_grad, total_loss_and_grad, windowed_mean,
)
from craftmesh.linalg import dense_solve
from craftmesh.mesh_core import TriMesh, grid_heightfield, icosphere
from craftmesh.poisson2d import build_system
from craftmesh.raster import encode_normal_image, render, sample_viewpoints
from craftmesh.sdf_boolean import RegionSelection, faces_touching


def _random_targets(rng, mesh):
    d = rng.normal(size=(mesh.n_faces, 3))
    w = rng.integers(0, 5, mesh.n_faces).astype(float)
    return FaceTargets(d * rng.uniform(0.5, 3, (mesh.n_faces, 1)), w, (w > 0).astype(np.int64))


def _fd_check(f, mesh, free, h=1e-6):
    _, g = f(mesh)
    V = mesh.vertices
    num = np.zeros_like(g)
    for i, v in enumerate(free):
        for k in range(3):
            Vp, Vm = V.copy(), V.copy()
            Vp[v, k] += h
            Vm[v, k] -= h
            num[i, k] = (f(mesh.with_vertices(Vp))[0] - f(mesh.with_vertices(Vm))[0]) / (2 * h)
    scale = max(np.abs(num).max(), 1e-12)
    return np.abs(num - g).max() / scale


def test_config_validation():
    with pytest.raises(ValueError):
        FusionConfig(iterations=-1)
    with pytest.raises(ValueError):
        FusionConfig(smooth_weight=-0.1)
    with pytest.raises(ValueError):
        FusionConfig(edge_min=0.2, edge_max=0.1)
    assert FusionConfig().iterations == 1000


def test_normal_loss_zero_at_targets():
    m = icosphere(1)
    n = m.face_normals()
    tg = FaceTargets(n * 2.0, np.ones(m.n_faces), np.ones(m.n_faces, np.int64))
    loss, g = normal_loss_and_grad(m, tg, np.arange(m.n_vertices))
    assert loss == pytest.approx(0, abs=1e-24) and np.abs(g).max() < 1e-12


def test_normal_loss_right_angle_is_2w():
    m = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    tg = FaceTargets(np.array([[1.0, 0, 0]]), np.array([3.0]), np.array([1]))
    loss, _ = normal_loss_and_grad(m, tg, [0, 1, 2])
    assert loss == pytest.approx(2 * 3.0)


def test_normal_grad_zero_off_weighted_faces():
    m = grid_heightfield(5, 5, lambda x, y: x * y)
    rng = np.random.default_rng(0)
    tg = FaceTargets(rng.normal(size=(m.n_faces, 3)), np.zeros(m.n_faces), np.zeros(m.n_faces, np.int64))
    tg.weight[0] = 1.0
    _, g = normal_loss_and_grad(m, tg, np.arange(m.n_vertices))
    touched = np.zeros(m.n_vertices, bool)
    touched[m.faces[0]] = True
    assert not g[~touched].any()


def test_normal_loss_skips_degenerate():
    m = TriMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]], [[0, 1, 2], [0, 1, 3]])
    tg = FaceTargets(np.array([[0, 0, 1.0], [0, 0, 1.0]]), np.ones(2), np.ones(2, np.int64))
    counters = {}
    with pytest.warns(UserWarning):
        loss, _ = normal_loss_and_grad(m, tg, [0, 1, 2, 3], counters)
    assert counters["degenerate_faces"] == 1 and np.isfinite(loss)


def test_smoothness_planar_grid_zero():
    m = grid_heightfield(7, 7, lambda x, y: 0 * x)
    interior = np.flatnonzero((np.abs(m.vertices[:, :2]) < 0.49).all(1))
    # the diagonal split makes a regular grid non-uniform for corners, so use an affine field
    loss, g = smoothness_loss_and_grad(m, interior)
    assert loss == pytest.approx(0, abs=1e-25) and np.abs(g).max() < 1e-12


def test_smoothness_single_displaced_vertex():
    m = grid_heightfield(5, 5, lambda x, y: 0 * x)
    c = 12
    V = m.vertices.copy()
    V[c, 2] += 0.3
    loss, _ = smoothness_loss_and_grad(m.with_vertices(V), [c])
    assert loss == pytest.approx(0.09)


def test_smoothness_isolated_vertex_excluded():
    m = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]], [[0, 1, 2]])
    counters = {}
    with pytest.warns(UserWarning):
        smoothness_loss_and_grad(m, [0, 3], counters)
    assert counters["isolated_vertices"] == 1


@given(st.integers(0, 2**31 - 1))
def test_normal_grad_finite_differences(seed):
    rng = np.random.default_rng(seed)
    m = random_surface(rng)
    tg = _random_targets(rng, m)
    free = rng.choice(m.n_vertices, 10, replace=False)
    assert _fd_check(lambda mm: normal_loss_and_grad(mm, tg, free), m, free) <= 1e-4


@given(st.integers(0, 2**31 - 1))
def test_smoothness_grad_finite_differences(seed):
    rng = np.random.default_rng(seed)
    m = random_surface(rng)
    free = rng.choice(m.n_vertices, 12, replace=False)
    assert _fd_check(lambda mm: smoothness_loss_and_grad(mm, free), m, free) <= 1e-4


def test_zero_smoothness_exact_targets_no_motion():
    _, _, regions = ridge_scene()
    mesh_t, _, _ = ridge_scene()
    n = mesh_t.face_normals()
    tg = FaceTargets(n.copy(), np.ones(mesh_t.n_faces), np.ones(mesh_t.n_faces, np.int64))
    _, g = total_loss_and_grad(mesh_t, tg, regions.t_opt, 0.0, LossScales(1.0, 1.0))
    assert np.abs(g).max() <= 1e-12


def test_identity_blend_targets_equal_face_normals():
    mesh_t, _, regions = bump_scene()
    regions = RegionSelection(regions.seam, regions.t_in, regions.t_in, regions.t_opt,
                              regions.eps0, regions.eps1)
    cams = sample_viewpoints(6, (0, 0, 0), 2.0, seed=1, resolution=(96, 96))
    tg = compute_blended_targets(mesh_t, mesh_t, regions, cams)
    w = tg.weight > 0
    assert w.any()
    err = np.linalg.norm(tg.directions[w] - mesh_t.face_normals()[w], axis=1)
    assert err.max() <= 1e-3


def test_empty_t_opt_gives_zero_weight():
    mesh_t, mesh_e, r = bump_scene()
    empty = RegionSelection(r.seam, r.t_in, r.e_in, [], r.eps0, r.eps1)
    tg = compute_blended_targets(mesh_t, mesh_e, empty, sample_viewpoints(2, (0, 0, 0), 2, 0))
    assert tg.total_weight == 0


def test_empty_masks_raise():
    mesh_t, mesh_e, r = bump_scene()
    # cameras looking away from the object see nothing
    cams = sample_viewpoints(2, (50, 50, 50), 1.0, seed=0, resolution=(16, 16))
    with pytest.raises(EmptyTargetError):
        compute_blended_targets(mesh_t, mesh_e, r, cams)


def test_bump_targets_tilt_toward_reference_and_match_dense_blend():
    mesh_t, mesh_e, regions = bump_scene()
    cam = sample_viewpoints(1, (0, 0, 0), 2.0, seed=0, resolution=(32, 32))[0]
    cam = type(cam)((0.3, -0.2, 2.0), (0, 0, 0), (0, 1, 0), cam.fov, 32, 32)
    rt, blended, mask = blend_view(mesh_t, mesh_e, regions, cam)
    assert mask.any()
    # dense oracle on the same single view
    t_in_f = faces_touching(mesh_t, regions.t_in)
    e_in_f = faces_touching(mesh_e, regions.e_in)
    tgt = encode_normal_image(render(mesh_t, cam, t_in_f), restrict_to_mask=True)
    src = encode_normal_image(render(mesh_e, cam, e_in_f), restrict_to_mask=True)
    system, coords = build_system(tgt, src, mask)
    xd = np.clip(dense_solve(system), 0, 1)
    assert np.abs(blended[coords[:, 0], coords[:, 1]] - xd).max() <= 1e-8
    # blended normals are closer to the flat reference than the bump normals
    tg = compute_blended_targets(mesh_t, mesh_e, regions, [cam])
    w = tg.weight > 0
    up = np.array([0, 0, 1.0])
    before = np.arccos(np.clip(mesh_t.face_normals()[w] @ up, -1, 1))
    after = np.arccos(np.clip(tg.directions[w] @ up, -1, 1))
    assert np.average(after, weights=tg.weight[w]) < np.average(before, weights=tg.weight[w])


def test_remesh_unchanged_within_bounds():
    m = icosphere(2)
    L = region_edge_lengths(m, np.arange(m.n_vertices))
    out, reg, vmap = remesh_region(m, np.arange(m.n_vertices), 0.5 * L.min(), 2 * L.max())
    assert out is m and np.array_equal(vmap, np.arange(m.n_vertices))


def test_remesh_single_split():
    m = TriMesh([[0, 0, 0], [2, 0, 0], [1, 1, 0]], [[0, 1, 2]])
    out, reg, _ = remesh_region(m, [0, 1], 0.1, 1.0)
    assert out.n_vertices == 4 and out.n_faces == 2
    assert reg.tolist() == [0, 1, 3]
    assert np.allclose(out.vertices[3], [1, 0, 0])
    assert (out.face_normals()[:, 2] > 0).all()


def test_remesh_icosphere_split_bound_and_closed():
    m = icosphere(2)
    L = region_edge_lengths(m, np.arange(m.n_vertices))
    lmax = 0.5 * L.mean()
    out, reg, _ = remesh_region(m, np.arange(m.n_vertices), 0.2 * lmax, lmax)
    assert region_edge_lengths(out, reg).max() <= lmax + 1e-12
    assert out.topology.is_closed and out.topology.euler_characteristic(out.n_faces) == 2


def test_remesh_collapse_keeps_manifold():
    m = icosphere(3)
    rng = np.random.default_rng(0)
    region = np.flatnonzero(m.vertices[:, 2] > 0.3)
    L = region_edge_lengths(m, region)
    out, reg, vmap = remesh_region(m, region, 1.5 * L.mean(), 4 * L.mean())
    assert out.n_vertices < m.n_vertices
    assert out.topology.is_closed and out.topology.euler_characteristic(out.n_faces) == 2
    kept = np.setdiff1d(np.arange(m.n_vertices), region)
    assert np.array_equal(out.vertices[vmap[kept]], m.vertices[kept])


def test_fuse_zero_iterations_identity():
    mesh_t, mesh_e, regions = ridge_scene()
    res = fuse_geometry(mesh_t, mesh_e, regions, FusionConfig(iterations=0))
    assert res.mesh is mesh_t and res.loss_trace == []


def test_fuse_identical_reference_barely_moves():
    mesh_t, _, regions = bump_scene()
    regions = RegionSelection(regions.seam, regions.t_in, regions.t_in, regions.t_opt,
                              regions.eps0, regions.eps1)
    # the smoothness term alone would relax the curved bump, so isolate the normal term
    cfg = FusionConfig(iterations=30, views=6, resolution=96, smooth_weight=0.0)
    res = fuse_geometry(mesh_t, mesh_t, regions, cfg, seed=2)
    disp = np.linalg.norm(res.mesh.vertices - mesh_t.vertices, axis=1).max()
    assert disp <= 1e-3 * mesh_t.diagonal()


def test_fuse_conserves_untouched_and_reduces_loss():
    mesh_t, mesh_e, regions = ridge_scene(n=25, reference_n=49)
    cfg = FusionConfig(iterations=60, views=4, resolution=64, remesh_interval=0)
    res = fuse_geometry(mesh_t, mesh_e, regions, cfg, seed=1)
    fixed = np.setdiff1d(np.arange(mesh_t.n_vertices), regions.t_opt)
    assert np.array_equal(res.mesh.vertices[fixed], mesh_t.vertices[fixed])
    assert res.loss_trace[-1] < res.loss_trace[0]
    assert max_seam_dihedral(res.mesh, regions.t_opt) < max_seam_dihedral(mesh_t, regions.t_opt)


def test_fuse_with_remesh_keeps_vertex_map_consistent():
    mesh_t, mesh_e, regions = ridge_scene(n=25, reference_n=49)
    L = region_edge_lengths(mesh_t, regions.t_opt).mean()
    cfg = FusionConfig(iterations=12, views=3, resolution=48, remesh_interval=5,
                       edge_min=0.3 * L, edge_max=0.9 * L)
    res = fuse_geometry(mesh_t, mesh_e, regions, cfg, seed=0)
    assert res.counters.get("remesh_events", 0) >= 1
    assert res.mesh.n_vertices > mesh_t.n_vertices
    fixed = np.setdiff1d(np.arange(mesh_t.n_vertices), regions.t_opt)
    assert (res.vertex_map[fixed] >= 0).all()
    assert np.array_equal(res.mesh.vertices[res.vertex_map[fixed]], mesh_t.vertices[fixed])
    assert np.isin(res.regions.t_opt, res.regions.t_in).all()


@given(st.integers(0, 2**31 - 1))
def test_stable_step_bounds_curvature(seed):
    rng = np.random.default_rng(seed)
    m = random_surface(rng)
    tg = _random_targets(rng, m)
    free = np.arange(m.n_vertices)
    scales = LossScales(1.0 / tg.total_weight, 1.0)
    eta = stable_step(m, tg, free, 0.1, scales)
    f = lambda mm: total_loss_and_grad(mm, tg, free, 0.1, scales)
    assert eta.shape == (m.n_vertices,) and (eta > 0).all()
    # a preconditioned gradient step must not increase the loss
    l0, g = f(m)
    l1, _ = f(m.with_vertices(m.vertices - eta[:, None] * g))
    assert l1 <= l0


def test_windowed_mean():
    assert np.allclose(windowed_mean(np.arange(10.0), 5), np.arange(2.0, 8.0))
    assert windowed_mean([1.0, 3.0], 5).tolist() == [2.0]
