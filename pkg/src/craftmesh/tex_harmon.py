"""Texture harmonization: a mesh Poisson solve over a dense texel mesh of the new region.

Every covered texel of the new region becomes a vertex in a fresh 2D
parameterization; the Delaunay triangulation of those points carries a
linear finite-element gradient/divergence pair, and colors are solved with
Dirichlet values taken from the neighbouring preserved texture.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .delaunay import DegenerateInputError, delaunay
from .linalg import SparseSystem, cg_solve, dirichlet_reduce
from .mesh_core import TopologyError, TriMesh, point_in_triangle_2d
from .sdf_boolean import RegionSelection

MIN_TRIANGLE_AREA = 1e-14


class UVOverlapError(ValueError):
    def __init__(self, texels):
        self.texels = np.asarray(texels)
        super().__init__(f"{len(self.texels)} texels claimed by several faces, e.g. {self.texels[:8].tolist()}")


class HarmonizationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TextureAtlas:
    """Texture image (H, W, C) in [0, 1]; row 0 is the top (v = 1) of UV space."""

    image: np.ndarray
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        img = np.asarray(self.image, dtype=np.float64)
        if img.ndim == 2:
            img = img[..., None]
        if img.ndim != 3 or img.shape[0] < 1 or img.shape[1] < 1:
            raise ValueError(f"atlas must be (H, W, C), got {img.shape}")
        valid = np.ones(img.shape[:2], bool) if self.valid is None else np.asarray(self.valid, bool)
        if valid.shape != img.shape[:2]:
            raise ValueError("validity mask shape mismatch")
        if not np.isfinite(img[valid]).all():
            raise ValueError("valid texels must be finite")
        img = img.copy()
        img.setflags(write=False)
        object.__setattr__(self, "image", img)
        object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]

    @property
    def channels(self) -> int:
        return self.image.shape[2]

    @classmethod
    def load(cls, path) -> "TextureAtlas":
        from PIL import Image

        with Image.open(path) as im:
            a = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
        return cls(a)

    def save(self, path) -> None:
        """Write as 8-bit PNG (lossy), or as exact float ``.npy``."""
        path = Path(path)
        if path.suffix == ".npy":
            np.save(path, self.image)
            return
        from PIL import Image

        rgb = np.clip(self.image[..., :3], 0, 1)
        Image.fromarray(np.round(rgb * 255).astype(np.uint8)).save(path)


def uv_to_pixel(uv, width: int, height: int):
    """Continuous texel coordinates (x=col, y=row) whose integers are texel centers."""
    uv = np.asarray(uv, float)
    return np.stack([uv[..., 0] * width - 0.5, (1.0 - uv[..., 1]) * height - 0.5], -1)


@dataclass(frozen=True, eq=False)
class TexelCorrespondence:
    """For each covered texel: owning face, barycentrics, 3D point and region label."""

    shape: tuple
    rows: np.ndarray
    cols: np.ndarray
    face: np.ndarray
    bary: np.ndarray
    face_vertices: np.ndarray
    points: np.ndarray
    is_new: np.ndarray

    def __len__(self):
        return len(self.rows)

    def label_image(self) -> np.ndarray:
        """-1 uncovered, 0 preserved, 1 new."""
        img = np.full(self.shape, -1, np.int8)
        img[self.rows, self.cols] = self.is_new.astype(np.int8)
        return img

    def valid_mask(self) -> np.ndarray:
        return self.label_image() >= 0


def build_correspondence(mesh: TriMesh, atlas: TextureAtlas, regions: RegionSelection) -> TexelCorrespondence:
    if mesh.uvs is None:
        raise ValueError("mesh has no UVs")
    H, W = atlas.height, atlas.width
    tri = uv_to_pixel(mesh.uvs, W, H)  # (F, 3, 2)
    c0 = np.clip(np.ceil(tri[..., 0].min(1)), 0, W).astype(np.int64)
    c1 = np.clip(np.floor(tri[..., 0].max(1)) + 1, 0, W).astype(np.int64)
    r0 = np.clip(np.ceil(tri[..., 1].min(1)), 0, H).astype(np.int64)
    r1 = np.clip(np.floor(tri[..., 1].max(1)) + 1, 0, H).astype(np.int64)
    wx = np.maximum(c1 - c0, 0)
    wy = np.maximum(r1 - r0, 0)
    cnt = wx * wy
    k = np.repeat(np.arange(mesh.n_faces), cnt)
    local = np.arange(int(cnt.sum())) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    pc = c0[k] + local % np.maximum(wx[k], 1)
    pr = r0[k] + local // np.maximum(wx[k], 1)
    pts = np.stack([pc, pr], 1).astype(float)
    inside = point_in_triangle_2d(tri[k], pts)
    k, pc, pr, pts = k[inside], pc[inside], pr[inside], pts[inside]
    bary = _barycentric(tri[k], pts)

    pix = pr * W + pc
    o = np.lexsort((k, pix))
    pix_o = pix[o]
    first = np.r_[True, pix_o[1:] != pix_o[:-1]] if len(o) else np.zeros(0, bool)
    if len(o) and not first.all():
        # shared chart corners may be claimed twice; strictly interior double claims are overlaps
        strict = (bary > 1e-9).all(1)
        group = np.cumsum(first) - 1
        n_strict = np.bincount(group, weights=strict[o].astype(float), minlength=int(first.sum()))
        n_claims = np.bincount(group, minlength=int(first.sum()))
        bad = (n_claims > 1) & (n_strict >= 1)
        if bad.any():
            bad_pix = pix_o[first][bad]
            raise UVOverlapError(np.stack([bad_pix // W, bad_pix % W], 1))
    keep = o[first]
    k, pc, pr, bary = k[keep], pc[keep], pr[keep], bary[keep]
    bary = np.clip(bary, 0.0, None)
    bary /= bary.sum(1, keepdims=True)
    fv = mesh.faces[k]
    points = np.einsum("ij,ijk->ik", bary, mesh.vertices[fv])
    is_new = np.isin(k, regions.new_faces)
    return TexelCorrespondence((H, W), pr, pc, k, bary, fv, points, is_new)


def _barycentric(tri, pts):
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    v0, v1, v2 = b - a, c - a, pts - a
    den = v0[:, 0] * v1[:, 1] - v1[:, 0] * v0[:, 1]
    l1 = (v2[:, 0] * v1[:, 1] - v1[:, 0] * v2[:, 1]) / den
    l2 = (v0[:, 0] * v2[:, 1] - v2[:, 0] * v0[:, 1]) / den
    return np.stack([1 - l1 - l2, l1, l2], 1)


# ---------------------------------------------------------------------------
# parameterization


def boundary_loops(faces: np.ndarray):
    """Directed boundary loops of an oriented triangle set (vertex id lists)."""
    he = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    fwd = {(int(a), int(b)) for a, b in he}
    nxt = {}
    for a, b in fwd:
        if (b, a) not in fwd:
            if a in nxt:
                raise TopologyError(f"boundary vertex {a} is non-manifold")
            nxt[a] = b
    loops = []
    seen = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        v = nxt[start]
        while v != start:
            if v in seen or v not in nxt:
                raise TopologyError("boundary does not form simple loops")
            loop.append(v)
            seen.add(v)
            v = nxt[v]
        loops.append(loop)
    return loops


def face_components(mesh: TriMesh, face_ids) -> list:
    """Groups of ``face_ids`` connected through shared vertices, in order of first face."""
    face_ids = np.unique(np.asarray(face_ids, dtype=np.int64))
    if len(face_ids) == 0:
        return []
    F = mesh.faces[face_ids]
    nf = len(face_ids)
    rows = np.repeat(np.arange(nf), 3)
    inc = sparse.csr_matrix((np.ones(3 * nf), (rows, F.ravel())), shape=(nf, mesh.n_vertices))
    _, labels = connected_components(inc @ inc.T, directed=False)
    comps = {}
    for fi, lab in zip(face_ids.tolist(), labels.tolist()):
        comps.setdefault(lab, []).append(fi)
    return [np.array(v, np.int64) for v in sorted(comps.values(), key=lambda x: x[0])]


@dataclass(frozen=True, eq=False)
class Parameterization:
    """Per-vertex 2D coordinates (NaN outside the region) and per-vertex component ids."""

    coords: np.ndarray
    component: np.ndarray
    n_components: int


def tutte_embedding(faces: np.ndarray, n_vertices: int, loop) -> np.ndarray:
    """Uniform-weight harmonic map of a disk with ``loop`` pinned to the unit circle by arc length."""
    return _tutte(faces, n_vertices, loop, None)


def _tutte(faces, n_vertices, loop, positions):
    loop = np.asarray(loop, np.int64)
    if positions is not None:
        seg = np.linalg.norm(positions[np.roll(loop, -1)] - positions[loop], axis=1)
    else:
        seg = np.ones(len(loop))
    s = np.r_[0.0, np.cumsum(seg)[:-1]] / seg.sum()
    theta = 2 * np.pi * s
    uv = np.zeros((n_vertices, 2))
    uv[loop] = np.stack([np.cos(theta), np.sin(theta)], 1)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.unique(np.sort(e, 1), axis=0)
    A = sparse.csr_matrix((np.ones(2 * len(e)), (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])),
                          shape=(n_vertices, n_vertices))
    L = sparse.diags(np.asarray(A.sum(1)).ravel()) - A
    system, free = dirichlet_reduce(L, np.zeros((n_vertices, 2)), loop, uv[loop])
    if len(free):
        x, rep = cg_solve(system, tol=1e-12)
        uv[free] = x
    return uv


def parameterize_new_region(mesh: TriMesh, new_faces) -> Parameterization:
    """Fresh Tutte embedding of every connected component of the new region.

    Components are laid out side by side (disk ``k`` centred at ``(3k, 0)``).
    """
    coords = np.full((mesh.n_vertices, 2), np.nan)
    component = np.full(mesh.n_vertices, -1, np.int64)
    comps = face_components(mesh, new_faces)
    for ci, fids in enumerate(comps):
        sub, used = mesh.submesh(fids)
        loops = boundary_loops(sub.faces)
        chi = sub.topology.euler_characteristic(sub.n_faces)
        if len(loops) != 1 or chi != 1:
            genus = (2 - chi - len(loops)) / 2
            raise TopologyError(
                f"new-region component {ci} is not a disk: {len(loops)} boundary loops, "
                f"Euler characteristic {chi}, genus {genus:g}"
            )
        uv = _tutte(sub.faces, sub.n_vertices, loops[0], sub.vertices)
        a = uv[sub.faces]
        signed = (a[:, 1, 0] - a[:, 0, 0]) * (a[:, 2, 1] - a[:, 0, 1]) - (a[:, 1, 1] - a[:, 0, 1]) * (a[:, 2, 0] - a[:, 0, 0])
        if (signed <= 0).any():
            raise TopologyError(f"component {ci}: {int((signed <= 0).sum())} flipped triangles in embedding")
        coords[used] = uv + np.array([3.0 * ci, 0.0])
        component[used] = ci
    return Parameterization(coords, component, len(comps))


# ---------------------------------------------------------------------------
# texel mesh


@dataclass(frozen=True, eq=False)
class TexelMesh:
    """Dense 2D mesh whose vertices are new-region texels.

    ``texel_rc`` lists every new texel (row, col) and ``texel_vertex`` the
    vertex that carries it (exactly coincident texels share one vertex).
    """

    points: np.ndarray
    triangles: np.ndarray
    colors: np.ndarray
    boundary: np.ndarray
    texel_rc: np.ndarray
    texel_vertex: np.ndarray
    surface_points: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.points)

    def signed_areas(self) -> np.ndarray:
        a = self.points[self.triangles]
        return 0.5 * ((a[:, 1, 0] - a[:, 0, 0]) * (a[:, 2, 1] - a[:, 0, 1])
                      - (a[:, 1, 1] - a[:, 0, 1]) * (a[:, 2, 0] - a[:, 0, 0]))

    def basis_gradients(self) -> np.ndarray:
        """(T, 3, 2): gradient of each hat function on each triangle, ``(v_k - v_j)^perp / 2|T|``."""
        a = self.points[self.triangles]
        area = self.signed_areas()
        g = np.empty((len(a), 3, 2))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            d = a[:, k] - a[:, j]
            # rotate by +90 degrees: the gradient points from edge (j, k) toward vertex i
            g[:, i, 0] = -d[:, 1]
            g[:, i, 1] = d[:, 0]
        return g / (2.0 * area[:, None, None])

    def outer_boundary(self) -> np.ndarray:
        mark = np.zeros(self.n_vertices, bool)
        if len(self.triangles):
            for loop in boundary_loops(self.triangles):
                mark[loop] = True
        return mark

    def as_mesh(self) -> TriMesh:
        """2D triangulation lifted to z = 0, for debug dumps."""
        return TriMesh(np.c_[self.points, np.zeros(self.n_vertices)], self.triangles,
                       vertex_colors=np.clip(self.colors[:, :3], 0, 1) if self.colors.shape[1] >= 3 else None)


def _strip_hull_slivers(points, tris):
    """Remove near-zero-area triangles on the hull (never interior in a Delaunay mesh)."""
    while len(tris):
        a = points[tris]
        area = 0.5 * ((a[:, 1, 0] - a[:, 0, 0]) * (a[:, 2, 1] - a[:, 0, 1])
                      - (a[:, 1, 1] - a[:, 0, 1]) * (a[:, 2, 0] - a[:, 0, 0]))
        bad = area <= MIN_TRIANGLE_AREA
        if not bad.any():
            break
        he = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
        key = np.sort(he, 1)
        _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        on_hull = (counts[inv.reshape(3, -1)] == 1).any(0)
        drop = bad & on_hull
        if not drop.any():
            raise DegenerateInputError("zero-area triangle in triangulation interior")
        tris = tris[~drop]
    return tris


def build_texel_mesh(corr: TexelCorrespondence, param: Parameterization, atlas: TextureAtlas) -> TexelMesh:
    sel = np.flatnonzero(corr.is_new)
    if len(sel) < 3:
        raise DegenerateInputError(f"need at least 3 new-region texels, got {len(sel)}")
    uv = param.coords[corr.face_vertices[sel]]  # (n, 3, 2)
    p = np.einsum("ij,ijk->ik", corr.bary[sel], uv)
    comp = param.component[corr.face_vertices[sel, 0]]
    if not np.isfinite(p).all():
        raise ValueError("parameterization does not cover every new texel")
    # coincident texels (chart seams) collapse to one vertex
    key = np.c_[comp, p]
    uniq, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inv = inv.reshape(-1)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    vert_of_texel = rank[inv]
    rep = sel[first[order]]
    points = p[first[order]]
    vcomp = comp[first[order]]

    tris = []
    for c in np.unique(vcomp):
        ids = np.flatnonzero(vcomp == c)
        try:
            t = delaunay(points[ids])
        except DegenerateInputError:
            continue  # left as Dirichlet-only vertices below
        tris.append(ids[_strip_hull_slivers(points[ids], t)])
    if not tris:
        raise DegenerateInputError("new-region texels are collinear in every component")
    tris = np.concatenate(tris)

    rows, cols = corr.rows[sel], corr.cols[sel]
    colors = atlas.image[corr.rows[rep], corr.cols[rep]].copy()
    label = corr.label_image()
    H, W = corr.shape
    near_pr = np.zeros(len(sel), bool)
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        r, c = rows + dr, cols + dc
        ok = (r >= 0) & (r < H) & (c >= 0) & (c < W)
        near_pr[ok] |= label[r[ok], c[ok]] == 0
    boundary = np.zeros(len(points), bool)
    boundary[vert_of_texel[near_pr]] = True
    in_tri = np.zeros(len(points), bool)
    in_tri[tris.ravel()] = True
    tm = TexelMesh(points, tris, colors, boundary, np.c_[rows, cols], vert_of_texel,
                   corr.points[rep])
    outer = tm.outer_boundary()
    object.__setattr__(tm, "boundary", boundary | outer | ~in_tri)
    return tm


# ---------------------------------------------------------------------------
# operators and solve


@dataclass(frozen=True, eq=False)
class MeshOperators:
    """Piecewise-linear gradient (2T x n), divergence (n x 2T) and their product."""

    gradient: sparse.csr_matrix
    divergence: sparse.csr_matrix
    laplacian: sparse.csr_matrix
    areas: np.ndarray

    def grad(self, phi) -> np.ndarray:
        """Per-triangle gradient (T, 2[, C]) of vertex values."""
        g = self.gradient @ np.asarray(phi, float)
        return g.reshape((len(self.areas), 2) + g.shape[1:])

    def div(self, w) -> np.ndarray:
        w = np.asarray(w, float)
        return self.divergence @ w.reshape((2 * len(self.areas),) + w.shape[2:])


def build_operators(tm: TexelMesh) -> MeshOperators:
    T = tm.triangles
    nt, n = len(T), tm.n_vertices
    area = tm.signed_areas()
    if nt and area.min() <= MIN_TRIANGLE_AREA:
        raise DegenerateInputError("texel mesh has non-positive triangle areas")
    gB = tm.basis_gradients()
    rows = np.repeat(2 * np.arange(nt)[:, None] + np.arange(2)[None, :], 3, axis=1).reshape(nt, 2, 3)
    rows = np.transpose(rows, (0, 2, 1))  # (T, 3, 2) matching gB
    cols = np.repeat(T[:, :, None], 2, axis=2)
    G = sparse.csr_matrix((gB.ravel(), (rows.ravel(), cols.ravel())), shape=(2 * nt, n))
    D = sparse.csr_matrix(G.T.multiply(np.repeat(area, 2)[None, :]))
    L = sparse.csr_matrix(D @ G)
    return MeshOperators(G, D, L, area)


def cotangent_laplacian(points, triangles) -> sparse.csr_matrix:
    """Positive semidefinite cotangent stiffness matrix, computed from angles."""
    P = np.asarray(points, float)
    T = np.asarray(triangles, np.int64)
    n = len(P)
    rows, cols, vals = [], [], []
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        u = P[T[:, j]] - P[T[:, i]]
        v = P[T[:, k]] - P[T[:, i]]
        cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
        cot = np.einsum("ij,ij->i", u, v) / cross
        # the angle at i weights the opposite edge (j, k)
        w = -0.5 * cot
        rows += [T[:, j], T[:, k], T[:, j], T[:, k]]
        cols += [T[:, k], T[:, j], T[:, j], T[:, k]]
        vals += [w, w, -w, -w]
    return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def harmonize(tm: TexelMesh, guidance, boundary_colors, ops: Optional[MeshOperators] = None,
              tol: float = 1e-12, clamp: bool = True) -> np.ndarray:
    """Solve ``L x = Div(Grad guidance)`` with ``x = boundary_colors`` on boundary vertices.

    ``boundary_colors`` is aligned with ``np.flatnonzero(tm.boundary)``.
    Channels are independent right-hand sides of one system.
    """
    g = np.asarray(guidance, float)
    squeeze = g.ndim == 1
    g = g.reshape(tm.n_vertices, -1)
    if not np.isfinite(g).all():
        raise ValueError("guidance colors must be finite")
    fixed = np.flatnonzero(tm.boundary)
    if len(fixed) == 0:
        raise HarmonizationError("no boundary vertices: the Laplacian is singular")
    bc = np.asarray(boundary_colors, float).reshape(len(fixed), -1)
    if bc.shape[1] != g.shape[1]:
        raise ValueError("boundary colors and guidance differ in channel count")
    ops = ops or build_operators(tm)
    w = ops.gradient @ g
    b = ops.divergence @ w
    system, free = dirichlet_reduce(ops.laplacian, b, fixed, bc)
    x = np.empty_like(g)
    x[fixed] = bc
    if len(free):
        sol, rep = cg_solve(system, tol=tol)
        x[free] = sol
    if clamp:
        x = np.clip(x, 0.0, 1.0)
    return x[:, 0] if squeeze else x


def boundary_colors(tm: TexelMesh, corr: TexelCorrespondence, atlas: TextureAtlas) -> np.ndarray:
    """Dirichlet values for boundary vertices.

    Average of the 4-adjacent preserved texels; if a vertex has none (chart
    seams, separate charts), the preserved texel nearest in 3D; with no
    preserved texels at all, the vertex's own color.
    """
    fixed = np.flatnonzero(tm.boundary)
    out = tm.colors[fixed].copy()
    label = corr.label_image()
    H, W = corr.shape
    img = atlas.image
    acc = np.zeros((tm.n_vertices, img.shape[2]))
    cnt = np.zeros(tm.n_vertices)
    rows, cols = tm.texel_rc[:, 0], tm.texel_rc[:, 1]
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        r, c = rows + dr, cols + dc
        ok = (r >= 0) & (r < H) & (c >= 0) & (c < W)
        ok[ok] &= label[r[ok], c[ok]] == 0
        np.add.at(acc, tm.texel_vertex[ok], img[r[ok], c[ok]])
        np.add.at(cnt, tm.texel_vertex[ok], 1)
    has = cnt[fixed] > 0
    out[has] = acc[fixed[has]] / cnt[fixed[has], None]
    pr = np.flatnonzero(~corr.is_new)
    if (~has).any() and len(pr):
        _, j = cKDTree(corr.points[pr]).query(tm.surface_points[fixed[~has]])
        out[~has] = img[corr.rows[pr[j]], corr.cols[pr[j]]]
    return out


def bake_back(tm: TexelMesh, colors, atlas: TextureAtlas) -> TextureAtlas:
    img = atlas.image.copy()
    colors = np.asarray(colors, float).reshape(tm.n_vertices, -1)
    img[tm.texel_rc[:, 0], tm.texel_rc[:, 1]] = colors[tm.texel_vertex]
    return TextureAtlas(img, atlas.valid)


@dataclass
class HarmonizeReport:
    new_texels: int
    vertices: int
    triangles: int
    boundary_vertices: int
    components: int


def harmonize_texture(mesh: TriMesh, atlas: TextureAtlas, regions: RegionSelection, guidance=None):
    """Full chain: correspondence, parameterization, texel mesh, solve, bake.

    ``guidance`` optionally supplies an atlas whose new-region texels provide
    the guidance field; by default the atlas itself does. Returns
    ``(atlas, TexelMesh or None, HarmonizeReport)``.
    """
    corr = build_correspondence(mesh, atlas, regions)
    if not corr.is_new.any():
        return atlas, None, HarmonizeReport(0, 0, 0, 0, 0)
    param = parameterize_new_region(mesh, regions.new_faces)
    source = atlas if guidance is None else guidance
    tm = build_texel_mesh(corr, param, source)
    bc = boundary_colors(tm, corr, atlas)
    x = harmonize(tm, tm.colors, bc)
    out = bake_back(tm, x, atlas)
    rep = HarmonizeReport(int(corr.is_new.sum()), tm.n_vertices, len(tm.triangles),
                          int(tm.boundary.sum()), param.n_components)
    return out, tm, rep


# ---------------------------------------------------------------------------
# evaluation metrics


_PAIRS = ((0, 1), (1, 0))


def cross_seam_difference(image, label) -> float:
    """Mean absolute color difference over 4-adjacent (new, preserved) texel pairs."""
    img = np.asarray(image, float)
    H, W = label.shape
    diffs = []
    for dr, dc in _PAIRS:
        a, b = label[:H - dr, :W - dc], label[dr:, dc:]
        sel = ((a == 1) & (b == 0)) | ((a == 0) & (b == 1))
        diffs.append(np.abs(img[:H - dr, :W - dc] - img[dr:, dc:])[sel])
    d = np.concatenate(diffs)
    return float(d.mean()) if d.size else 0.0


def interior_detail_error(before, after, label, margin: int = 1) -> float:
    """Relative change of neighbor color deltas inside the new region.

    Only pairs of new texels farther than ``margin`` (4-neighborhood steps)
    from any non-new texel count; the default drops just the ring of
    Dirichlet texels, whose values are replaced outright. Returns ``mean|d_after - d_before| / mean|d_before|``.
    """
    from scipy import ndimage

    inner = ndimage.distance_transform_cdt(label == 1, metric="taxicab") > margin
    b0, b1 = np.asarray(before, float), np.asarray(after, float)
    H, W = label.shape
    d0, d1 = [], []
    for dr, dc in _PAIRS:
        sel = inner[:H - dr, :W - dc] & inner[dr:, dc:]
        d0.append((b0[:H - dr, :W - dc] - b0[dr:, dc:])[sel])
        d1.append((b1[:H - dr, :W - dc] - b1[dr:, dc:])[sel])
    d0, d1 = np.concatenate(d0), np.concatenate(d1)
    scale = np.abs(d0).mean() if d0.size else 0.0
    return float(np.abs(d1 - d0).mean() / scale) if scale > 0 else 0.0
