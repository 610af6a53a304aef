"""Geometric fusion: move seam-band vertices so face normals follow Poisson-blended targets.

The per-pixel normal discrepancy over all views is aggregated to per-face
targets (flat shading makes every pixel of a face share one rendered
normal), then vertex positions are optimized by gradient descent with
momentum, a uniform-Laplacian smoothness term and periodic local remeshing.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .mesh_core import DEGENERATE_AREA, TriMesh
from .poisson2d import poisson_blend
from .raster import decode_normal_image, encode_normal_image, render, sample_viewpoints
from .sdf_boolean import RegionSelection, faces_touching

log = logging.getLogger(__name__)


class EmptyTargetError(RuntimeError):
    pass


class FusionDiverged(FloatingPointError):
    def __init__(self, message, state):
        super().__init__(message)
        self.state = state


@dataclass
class FusionConfig:
    views: int = 24
    resolution: int = 512
    iterations: int = 1000
    learning_rate: float = 1e-3  # first step length as a fraction of the bbox diagonal
    momentum: float = 0.9
    smooth_weight: float = 0.1
    remesh_interval: int = 100
    edge_min: Optional[float] = None
    edge_max: Optional[float] = None
    reblend_interval: int = 50
    fov_degrees: float = 40.0
    camera_distance: float = 2.5  # multiple of the bounding radius

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.smooth_weight < 0:
            raise ValueError("smooth_weight must be >= 0")
        if self.edge_min is not None and self.edge_max is not None and not self.edge_min < self.edge_max:
            raise ValueError("edge_min must be < edge_max")
        if self.views < 1 or self.resolution < 8:
            raise ValueError("need views >= 1 and resolution >= 8")

    def as_dict(self):
        return asdict(self)


@dataclass
class FaceTargets:
    """Per-face sums of blended target normals and their pixel weights."""

    direction_sum: np.ndarray
    weight: np.ndarray
    view_counts: np.ndarray

    @classmethod
    def empty(cls, n_faces: int) -> "FaceTargets":
        return cls(np.zeros((n_faces, 3)), np.zeros(n_faces), np.zeros(n_faces, np.int64))

    @property
    def directions(self) -> np.ndarray:
        length = np.linalg.norm(self.direction_sum, axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(length > 0, self.direction_sum / length, 0.0)

    @property
    def total_weight(self) -> float:
        return float(self.weight.sum())


def _grow(m):
    g = m.copy()
    g[1:] |= m[:-1]
    g[:-1] |= m[1:]
    g[:, 1:] |= m[:, :-1]
    g[:, :-1] |= m[:, 1:]
    return g


def _shrink(m):
    return ~_grow(~m)


def blend_view(mesh_t: TriMesh, mesh_e: TriMesh, regions: RegionSelection, camera, *,
               t_in_faces=None, e_in_faces=None, opt_faces=None):
    """Render one view and Poisson-blend the normal maps.

    Returns ``(target render, blended encoded image, mask)``. The mask keeps
    only pixels whose 4-neighbourhood is covered by both the ``t_in`` and
    ``e_in`` renders, so every boundary value and guidance gradient comes
    from real surface rather than background.
    """
    if t_in_faces is None:
        t_in_faces = faces_touching(mesh_t, regions.t_in)
    if e_in_faces is None:
        e_in_faces = faces_touching(mesh_e, regions.e_in)
    if opt_faces is None:
        opt_faces = faces_touching(mesh_t, regions.t_opt)
    rt_t = render(mesh_t, camera, t_in_faces)
    rt_e = render(mesh_e, camera, e_in_faces)
    sel = np.zeros(mesh_t.n_faces + 1, dtype=bool)
    sel[opt_faces] = True
    mask = sel[rt_t.face_id] & _shrink(rt_t.mask) & _shrink(rt_e.mask)
    target = encode_normal_image(rt_t, restrict_to_mask=True)
    source = encode_normal_image(rt_e, restrict_to_mask=True)
    blended = poisson_blend(target, source, mask, erode=True)
    return rt_t, blended, mask


def compute_blended_targets(mesh_t: TriMesh, mesh_e: TriMesh, regions: RegionSelection, cameras) -> FaceTargets:
    """Accumulate decoded blended normals of masked pixels into per-face targets."""
    out = FaceTargets.empty(mesh_t.n_faces)
    if len(regions.t_opt) == 0:
        return out
    t_in_faces = faces_touching(mesh_t, regions.t_in)
    e_in_faces = faces_touching(mesh_e, regions.e_in)
    opt_faces = faces_touching(mesh_t, regions.t_opt)
    for cam in cameras:
        rt, blended, mask = blend_view(mesh_t, mesh_e, regions, cam, t_in_faces=t_in_faces,
                                       e_in_faces=e_in_faces, opt_faces=opt_faces)
        if not mask.any():
            continue
        n = decode_normal_image(blended[mask])
        f = rt.face_id[mask]
        np.add.at(out.direction_sum, f, n)
        out.weight += np.bincount(f, minlength=mesh_t.n_faces)
        out.view_counts[np.unique(f)] += 1
    if out.total_weight == 0:
        raise EmptyTargetError("optimization mask is empty in every view; nothing to optimize")
    return out


def _unit_normals_and_grad_factors(V, F):
    a, b, c = V[F[:, 0]], V[F[:, 1]], V[F[:, 2]]
    e1, e2 = b - a, c - a
    cr = np.cross(e1, e2)
    length = np.linalg.norm(cr, axis=1)
    return e1, e2, cr, length


def normal_loss_and_grad(mesh: TriMesh, targets: FaceTargets, free_vertices, counters: Optional[dict] = None):
    """``sum_f w_f |n_f - t_f|^2`` over weighted faces and its gradient at ``free_vertices``."""
    V = mesh.vertices
    free = np.asarray(free_vertices, dtype=np.int64)
    w = targets.weight
    faces = np.flatnonzero(w > 0)
    F = mesh.faces[faces]
    e1, e2, cr, length = _unit_normals_and_grad_factors(V, F)
    ok = 0.5 * length > DEGENERATE_AREA
    if not ok.all():
        skipped = int((~ok).sum())
        warnings.warn(f"{skipped} degenerate weighted faces skipped")
        if counters is not None:
            counters["degenerate_faces"] = counters.get("degenerate_faces", 0) + skipped
    faces, F, e1, e2, cr, length = faces[ok], F[ok], e1[ok], e2[ok], cr[ok], length[ok]
    n = cr / length[:, None]
    t = targets.directions[faces]
    wf = w[faces]
    diff = n - t
    loss = float(np.sum(wf * np.einsum("ij,ij->i", diff, diff)))
    g_n = 2.0 * wf[:, None] * diff
    # through the normalization: dn = (I - n n^T) dc / |c|
    g_c = (g_n - np.einsum("ij,ij->i", g_n, n)[:, None] * n) / length[:, None]
    g1 = np.cross(e2, g_c)
    g2 = np.cross(g_c, e1)
    grad = np.zeros_like(V)
    np.add.at(grad, F[:, 1], g1)
    np.add.at(grad, F[:, 2], g2)
    np.add.at(grad, F[:, 0], -(g1 + g2))
    return loss, grad[free]


def smoothness_loss_and_grad(mesh: TriMesh, free_vertices, counters: Optional[dict] = None):
    """Uniform Laplacian energy ``sum_{v free} |v - mean(N(v))|^2`` and its gradient."""
    V = mesh.vertices
    free = np.asarray(free_vertices, dtype=np.int64)
    adj = mesh.topology.adjacency_matrix()
    deg = np.asarray(adj.sum(1)).ravel()
    active = free[deg[free] > 0]
    if len(active) < len(free):
        warnings.warn(f"{len(free) - len(active)} isolated free vertices excluded from smoothness")
        if counters is not None:
            counters["isolated_vertices"] = counters.get("isolated_vertices", 0) + len(free) - len(active)
    delta = np.zeros_like(V)
    mean = (adj[active] @ V) / deg[active, None]
    delta[active] = V[active] - mean
    loss = float(np.sum(delta[active] ** 2))
    scaled = np.zeros_like(V)
    scaled[active] = delta[active] / deg[active, None]
    grad = 2.0 * delta - 2.0 * (adj.T @ scaled)
    return loss, grad[free]


@dataclass
class LossScales:
    """Normalizers making the two loss terms scale-free."""

    normal: float
    smooth: float


def total_loss_and_grad(mesh, targets, free, smooth_weight, scales: LossScales, counters=None):
    ln, gn = normal_loss_and_grad(mesh, targets, free, counters)
    total, grad = ln * scales.normal, gn * scales.normal
    if smooth_weight > 0:
        ls, gs = smoothness_loss_and_grad(mesh, free, counters)
        total += smooth_weight * scales.smooth * ls
        grad = grad + smooth_weight * scales.smooth * gs
    return total, grad


def stable_step(mesh: TriMesh, targets: FaceTargets, free, smooth_weight: float, scales: LossScales) -> np.ndarray:
    """Per-free-vertex step sizes below the inverse of a local curvature bound.

    A face normal moves by at most ``|dv| / altitude`` when one corner moves,
    so the normal term's curvature at a vertex is bounded by a constant times
    ``sum_f w_f / altitude_f**2``; the uniform-Laplacian energy has curvature
    at most 8 per unit weight. Acting as a diagonal preconditioner, this keeps
    sliver triangles from limiting the step of every other vertex.
    """
    free = np.asarray(free, dtype=np.int64)
    F = mesh.faces
    tri = mesh.vertices[F]
    area2 = np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    longest = np.linalg.norm(tri - np.roll(tri, 1, axis=1), axis=2).max(1)
    with np.errstate(divide="ignore", invalid="ignore"):
        alt = np.where(area2 > 2 * DEGENERATE_AREA, area2 / longest, np.inf)
    per_face = np.where(targets.weight > 0, targets.weight / alt ** 2, 0.0)
    per_vertex = np.zeros(mesh.n_vertices)
    for k in range(3):
        np.add.at(per_vertex, F[:, k], per_face)
    curv = 6.0 * scales.normal * per_vertex[free] + 8.0 * smooth_weight * scales.smooth
    with np.errstate(divide="ignore"):
        return np.where(curv > 0, 1.0 / curv, np.inf)


# ---------------------------------------------------------------------------
# remeshing


def _rot(face, a):
    """Rotate the vertex triple so it starts at ``a``."""
    i = face.index(a)
    return face[i:] + face[:i]


def remesh_region(mesh: TriMesh, region, edge_min: float, edge_max: float, max_passes: int = 8):
    """Split long and collapse short edges whose endpoints both lie in ``region``.

    Returns ``(mesh, region, vertex_map)`` where ``vertex_map[i]`` is the new
    index of old vertex ``i`` (-1 if collapsed away). Surviving vertices keep
    their relative order; split vertices are appended and join the region.
    UVs are dropped when the topology changes; vertex colors are averaged.
    """
    if not edge_min < edge_max:
        raise ValueError("edge_min must be < edge_max")
    V = [np.array(p) for p in mesh.vertices]
    colors = [np.array(c) for c in mesh.vertex_colors] if mesh.vertex_colors is not None else None
    faces = [list(map(int, f)) for f in mesh.faces]
    alive = [True] * len(faces)
    in_region = set(int(i) for i in region)
    removed = set()
    changed = False

    def build_edge_map():
        em = {}
        for fi, f in enumerate(faces):
            if not alive[fi]:
                continue
            for k in range(3):
                a, b = f[k], f[(k + 1) % 3]
                em.setdefault((min(a, b), max(a, b)), []).append(fi)
        return em

    # splits
    for _ in range(max_passes):
        em = build_edge_map()
        long_edges = []
        for (a, b), fl in em.items():
            if a in in_region and b in in_region:
                L = float(np.linalg.norm(V[a] - V[b]))
                if L > edge_max:
                    long_edges.append((-L, a, b))
        if not long_edges:
            break
        long_edges.sort()
        touched = set()
        for _, a, b in long_edges:
            fl = em[(a, b)]
            if any(fi in touched for fi in fl):
                continue
            m = len(V)
            V.append(0.5 * (V[a] + V[b]))
            if colors is not None:
                colors.append(0.5 * (colors[a] + colors[b]))
            in_region.add(m)
            for fi in fl:
                touched.add(fi)
                f = faces[fi]
                # orient so the edge runs x -> y in this face
                x = a if _rot(f, a)[1] == b else b
                y = b if x == a else a
                _, _, z = _rot(f, x)
                faces[fi] = [x, m, z]
                faces.append([m, y, z])
                alive.append(True)
                touched.add(len(faces) - 1)
            changed = True

    # collapses
    vf = {}
    for fi, f in enumerate(faces):
        if alive[fi]:
            for v in f:
                vf.setdefault(v, set()).add(fi)
    em = build_edge_map()
    boundary_v = set()
    for (a, b), fl in em.items():
        if len(fl) == 1:
            boundary_v.update((a, b))
    short = []
    for (a, b) in em:
        if a in in_region and b in in_region:
            L = float(np.linalg.norm(V[a] - V[b]))
            if L < edge_min:
                short.append((L, a, b))
    short.sort()
    for _, a, b in short:
        if a in removed or b in removed or a in boundary_v or b in boundary_v:
            continue
        if float(np.linalg.norm(V[a] - V[b])) >= edge_min:
            continue
        shared = vf[a] & vf[b]
        if len(shared) != 2:
            continue
        na = {v for fi in vf[a] for v in faces[fi]} - {a}
        nb = {v for fi in vf[b] for v in faces[fi]} - {b}
        if len(na & nb) != 2:
            continue  # link condition
        if len(na | nb) - 2 < 3:
            continue
        pos = 0.5 * (V[a] + V[b])
        ok = True
        for fi in (vf[a] | vf[b]) - shared:
            f = faces[fi]
            old = [V[v] for v in f]
            new = [pos if v in (a, b) else V[v] for v in f]
            n0 = np.cross(old[1] - old[0], old[2] - old[0])
            n1 = np.cross(new[1] - new[0], new[2] - new[0])
            if 0.5 * np.linalg.norm(n1) <= DEGENERATE_AREA or float(n0 @ n1) <= 0:
                ok = False
                break
            for v in f:
                if v not in (a, b) and np.linalg.norm(V[v] - pos) > edge_max:
                    ok = False
                    break
            if not ok:
                break
        if not ok:
            continue
        V[a] = pos
        if colors is not None:
            colors[a] = 0.5 * (colors[a] + colors[b])
        for fi in shared:
            alive[fi] = False
            for v in faces[fi]:
                vf[v].discard(fi)
        for fi in list(vf[b]):
            faces[fi] = [a if v == b else v for v in faces[fi]]
            vf[a].add(fi)
        vf[b] = set()
        removed.add(b)
        in_region.discard(b)
        changed = True

    if not changed:
        return mesh, np.unique(np.asarray(list(region), dtype=np.int64)), np.arange(mesh.n_vertices)
    n_total = len(V)
    keep = np.array([i not in removed for i in range(n_total)])
    vmap_full = np.full(n_total, -1, dtype=np.int64)
    vmap_full[keep] = np.arange(keep.sum())
    Vn = np.array(V)[keep]
    Fn = vmap_full[np.array([f for f, al in zip(faces, alive) if al], dtype=np.int64).reshape(-1, 3)]
    Cn = np.array(colors)[keep] if colors is not None else None
    new_region = np.unique(vmap_full[np.array(sorted(in_region), dtype=np.int64)])
    return TriMesh(Vn, Fn, None, Cn), new_region, vmap_full[:mesh.n_vertices]


def region_edge_lengths(mesh: TriMesh, region) -> np.ndarray:
    mark = np.zeros(mesh.n_vertices, bool)
    mark[np.asarray(region, dtype=np.int64)] = True
    e = mesh.topology.edges
    e = e[mark[e[:, 0]] & mark[e[:, 1]]]
    return np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)


# ---------------------------------------------------------------------------
# metrics


def seam_dihedral_angles(mesh: TriMesh, region) -> np.ndarray:
    """Angles between normals of faces adjacent across edges inside the band.

    The band is the set of faces touching ``region``; only interior edges
    with both faces in the band count.
    """
    band = np.zeros(mesh.n_faces, bool)
    band[faces_touching(mesh, region)] = True
    topo = mesh.topology
    ef = topo.edge_faces
    sel = (ef[:, 1] >= 0) & band[ef[:, 0]] & band[np.maximum(ef[:, 1], 0)]
    n = mesh.face_normals()
    cosang = np.einsum("ij,ij->i", n[ef[sel, 0]], n[ef[sel, 1]])
    return np.arccos(np.clip(cosang, -1.0, 1.0))


def max_seam_dihedral(mesh: TriMesh, region) -> float:
    a = seam_dihedral_angles(mesh, region)
    return float(a.max()) if len(a) else 0.0


def windowed_mean(trace, window: int = 50) -> np.ndarray:
    x = np.asarray(trace, float)
    if len(x) < window:
        return np.array([x.mean()]) if len(x) else x
    c = np.cumsum(np.r_[0.0, x])
    return (c[window:] - c[:-window]) / window


# ---------------------------------------------------------------------------
# optimization loop


@dataclass
class FusionResult:
    mesh: TriMesh
    loss_trace: list
    vertex_map: np.ndarray
    regions: RegionSelection
    counters: dict = field(default_factory=dict)


def _camera_rig(mesh: TriMesh, config: FusionConfig):
    lo, hi = mesh.bounds()
    center = 0.5 * (lo + hi)
    radius = float(np.linalg.norm(mesh.vertices - center, axis=1).max())
    return center, max(radius, 1e-9) * config.camera_distance


def fuse_geometry(mesh_t: TriMesh, mesh_e: TriMesh, regions: RegionSelection,
                  config: FusionConfig, seed: int = 0) -> FusionResult:
    """Optimize positions of ``regions.t_opt`` vertices toward blended normals.

    Vertices outside the optimization region are never written.
    """
    counters = {}
    vmap = np.arange(mesh_t.n_vertices)
    if config.iterations == 0 or len(regions.t_opt) == 0:
        return FusionResult(mesh_t, [], vmap, regions, counters)

    mesh = mesh_t
    free = regions.t_opt.copy()
    t_in = regions.t_in.copy()
    center, cam_radius = _camera_rig(mesh_t, config)
    fov = math.radians(config.fov_degrees)
    diag = mesh_t.diagonal()

    lengths = region_edge_lengths(mesh, free)
    mean_edge = float(lengths.mean()) if len(lengths) else diag * 1e-2
    edge_min = config.edge_min if config.edge_min is not None else 0.5 * mean_edge
    edge_max = config.edge_max if config.edge_max is not None else 2.0 * mean_edge
    scales_smooth = 1.0 / (max(len(free), 1) * mean_edge ** 2)

    blend_round = 0

    def targets_for(m, fr, ti):
        nonlocal blend_round
        cams = sample_viewpoints(config.views, center, cam_radius, seed + 7919 * blend_round,
                                 fov=fov, resolution=(config.resolution, config.resolution))
        blend_round += 1
        regs = RegionSelection(regions.seam, ti, regions.e_in, fr, regions.eps0, regions.eps1)
        tg = compute_blended_targets(m, mesh_e, regs, cams)
        return tg, LossScales(1.0 / tg.total_weight, scales_smooth)

    targets, scales = targets_for(mesh, free, t_in)
    V = mesh.vertices.copy()
    vel = np.zeros((len(free), 3))
    step_scale = None
    cap = None  # curvature-based step bound, refreshed with the targets
    trace = []
    for it in range(config.iterations):
        if it > 0 and config.remesh_interval and it % config.remesh_interval == 0:
            cur = mesh.with_vertices(V)
            new_mesh, new_free, m = remesh_region(cur, free, edge_min, edge_max)
            if new_mesh is not cur:
                old_vel = np.zeros((cur.n_vertices, 3))
                old_vel[free] = vel
                full_vel = np.zeros((new_mesh.n_vertices, 3))
                alive = m >= 0
                full_vel[m[alive]] = old_vel[alive]
                added = np.arange(cur.n_vertices - int((~alive).sum()), new_mesh.n_vertices)
                t_in = np.unique(np.r_[m[t_in][m[t_in] >= 0], added])
                vmap = np.where(vmap >= 0, m[np.maximum(vmap, 0)], -1)
                mesh, free = new_mesh, new_free
                V = mesh.vertices.copy()
                vel = full_vel[free]
                counters["remesh_events"] = counters.get("remesh_events", 0) + 1
            targets, scales = targets_for(mesh.with_vertices(V), free, t_in)
            cap = None
        elif it > 0 and config.reblend_interval and it % config.reblend_interval == 0:
            targets, scales = targets_for(mesh.with_vertices(V), free, t_in)
            cap = None

        cur = mesh.with_vertices(V)
        loss, grad = total_loss_and_grad(cur, targets, free, config.smooth_weight, scales, counters)
        if not (math.isfinite(loss) and np.isfinite(grad).all()):
            raise FusionDiverged(
                f"non-finite loss at iteration {it}",
                {"iteration": it, "loss": loss, "vertices": V.copy(), "free": free.copy(),
                 "trace": list(trace)},
            )
        trace.append(loss)
        if step_scale is None:
            g0 = float(np.linalg.norm(grad, axis=1).max()) if len(grad) else 0.0
            step_scale = config.learning_rate * diag / g0 if g0 > 0 else 0.0
        if cap is None:
            cap = stable_step(cur, targets, free, config.smooth_weight, scales)
        decay = 0.5 * (1.0 + math.cos(math.pi * it / config.iterations))
        lr = np.minimum(step_scale, cap) * decay
        vel = config.momentum * vel + grad
        V[free] -= lr[:, None] * vel
        if it % 50 == 0:
            log.debug("iteration %d loss %.6g", it, loss)

    out_regions = RegionSelection(regions.seam, t_in, regions.e_in, free, regions.eps0, regions.eps1)
    return FusionResult(mesh.with_vertices(V), trace, vmap, out_regions, counters)
