"""Boolean merge on signed-distance grids and seam/region extraction."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree
from skimage import measure

from .mesh_core import DistanceIndex, TriMesh, column_winding_numbers


class BooleanOp(str, Enum):
    UNION = "union"
    DIFFERENCE = "difference"


class GridLayoutError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SdfGrid:
    """Signed distances sampled at the corners of a regular grid.

    ``values[i, j, k]`` is the sample at ``origin + spacing * (i, j, k)``.
    """

    origin: np.ndarray
    spacing: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or min(v.shape) < 2:
            raise ValueError(f"grid needs >= 2 samples per axis, got {v.shape}")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if not np.isfinite(v).all():
            raise ValueError("grid values must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(3))
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def dims(self):
        return self.values.shape

    def axes(self):
        return [self.origin[a] + self.spacing * np.arange(n) for a, n in enumerate(self.dims)]

    def points(self) -> np.ndarray:
        X, Y, Z = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([X.ravel(), Y.ravel(), Z.ravel()], 1)

    def same_layout(self, other: "SdfGrid") -> bool:
        return (self.dims == other.dims and self.spacing == other.spacing
                and np.array_equal(self.origin, other.origin))

    def interpolate(self, points) -> np.ndarray:
        """Trilinear interpolation; points outside the grid are clamped to it."""
        axes = self.axes()
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        lo = np.array([a[0] for a in axes])
        hi = np.array([a[-1] for a in axes])
        p = np.clip(p, lo, hi)
        return RegularGridInterpolator(axes, self.values, method="linear")(p)


@dataclass(frozen=True, eq=False)
class RegionSelection:
    """Vertex and face sets steering geometric fusion and texture harmonization.

    ``t_in``/``t_opt`` index the merged mesh, ``e_in`` the reference mesh.
    """

    seam: np.ndarray
    t_in: np.ndarray
    e_in: np.ndarray
    t_opt: np.ndarray
    eps0: float
    eps1: float
    new_faces: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    preserved_faces: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    def __post_init__(self):
        for name in ("t_in", "e_in", "t_opt", "new_faces", "preserved_faces"):
            a = np.unique(np.asarray(getattr(self, name), dtype=np.int64).reshape(-1))
            object.__setattr__(self, name, a)
        object.__setattr__(self, "seam", np.asarray(self.seam, float).reshape(-1, 3))
        if not self.eps1 < self.eps0:
            raise ValueError(f"eps1 ({self.eps1}) must be < eps0 ({self.eps0})")
        if not np.isin(self.t_opt, self.t_in).all():
            raise ValueError("t_opt must be a subset of t_in")
        if np.intersect1d(self.new_faces, self.preserved_faces).size:
            raise ValueError("new and preserved face sets overlap")

    def with_faces(self, new_faces, preserved_faces) -> "RegionSelection":
        return replace(self, new_faces=new_faces, preserved_faces=preserved_faces)

    def to_json(self) -> str:
        return json.dumps({
            "seam": self.seam.tolist(), "t_in": self.t_in.tolist(), "e_in": self.e_in.tolist(),
            "t_opt": self.t_opt.tolist(), "eps0": self.eps0, "eps1": self.eps1,
            "new_faces": self.new_faces.tolist(), "preserved_faces": self.preserved_faces.tolist(),
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "RegionSelection":
        d = json.loads(text)
        return cls(np.array(d["seam"], float).reshape(-1, 3), d["t_in"], d["e_in"], d["t_opt"],
                   float(d["eps0"]), float(d["eps1"]),
                   d.get("new_faces", []), d.get("preserved_faces", []))

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RegionSelection":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def padded_bounds(meshes, resolution: int, pad_cells: float = 3.0):
    """Cube around all meshes with a margin of ``pad_cells`` cells."""
    los, his = [], []
    for m in meshes:
        if m.n_vertices:
            lo, hi = m.bounds()
            los.append(lo)
            his.append(hi)
    lo = np.min(los, 0)
    hi = np.max(his, 0)
    center = 0.5 * (lo + hi)
    half = 0.5 * max(float((hi - lo).max()), 1e-9)
    # half * (1 + 2 pad / res) leaves pad cells on each side
    half = half * resolution / (resolution - 2 * pad_cells)
    return center - half, center + half


def surface_samples(mesh: TriMesh, spacing: float) -> np.ndarray:
    """Points on every face such that each surface point is within ``spacing`` of one."""
    tri = mesh.vertices[mesh.faces]
    longest = np.linalg.norm(tri - np.roll(tri, 1, axis=1), axis=2).max(1)
    k = np.maximum(np.ceil(longest / spacing).astype(np.int64), 1)
    out = [mesh.vertices]
    for kk in np.unique(k):
        if kk == 1:
            continue
        i, j = np.mgrid[0:kk + 1, 0:kk + 1]
        keep = i + j <= kk
        b = np.stack([i[keep], j[keep]], 1) / kk
        t = tri[k == kk]
        a = t[:, 0]
        pts = a[:, None] + b[None, :, :1] * (t[:, 1] - a)[:, None] + b[None, :, 1:] * (t[:, 2] - a)[:, None]
        out.append(pts.reshape(-1, 3))
    return np.concatenate(out)


def sample_sdf(mesh: TriMesh, index: DistanceIndex, bounds, resolution: int, band=None) -> SdfGrid:
    """Sample the exact signed distance of a closed mesh on a cubic-cell grid.

    With ``band`` set, samples provably farther than ``band`` from the
    surface store ``+-band`` instead of the exact value (sign stays exact).
    Clamping commutes with min/max, so Boolean results are unchanged inside
    the band.
    """
    if mesh.n_faces == 0 or not mesh.topology.is_closed:
        raise ValueError("sample_sdf needs a closed mesh (sign undefined otherwise)")
    lo = np.asarray(bounds[0], float)
    hi = np.asarray(bounds[1], float)
    spacing = float((hi - lo).max()) / resolution
    dims = np.maximum(np.ceil((hi - lo) / spacing - 1e-9).astype(int) + 1, 2)
    mlo, mhi = mesh.bounds()
    top = lo + spacing * (dims - 1)
    if (mlo - lo < 2 * spacing * (1 - 1e-9)).any() or (top - mhi < 2 * spacing * (1 - 1e-9)).any():
        raise ValueError("bounds must contain the mesh with a margin of at least 2 cells")
    axes = [lo[a] + spacing * np.arange(dims[a]) for a in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], 1)
    if band is None:
        dist, _, _, _ = index.query(pts)
    else:
        # lower bound: distance to a surface sample minus the sample covering radius
        cover = 0.5 * spacing
        lower, _ = cKDTree(surface_samples(mesh, cover)).query(pts, distance_upper_bound=band + 2 * cover)
        near = lower - cover <= band
        dist = np.full(len(pts), float(band))
        if near.any():
            d, _, _, _ = index.query(pts[near])
            dist[near] = np.minimum(d, band)
    wind = column_winding_numbers(mesh, *axes).reshape(-1)
    values = np.where(wind > 0, -dist, dist).reshape(tuple(dims))
    return SdfGrid(lo, spacing, values)


def empty_like(grid: SdfGrid) -> SdfGrid:
    """Grid of an empty solid: positive everywhere."""
    return SdfGrid(grid.origin, grid.spacing, np.full(grid.dims, np.abs(grid.values).max() + grid.spacing))


def combine(a: SdfGrid, b: SdfGrid, op) -> SdfGrid:
    if not a.same_layout(b):
        raise GridLayoutError("grids differ in origin, spacing or dims")
    op = BooleanOp(op)
    if op is BooleanOp.UNION:
        v = np.minimum(a.values, b.values)
    else:
        v = np.maximum(a.values, -b.values)
    return SdfGrid(a.origin, a.spacing, v)


def marching_cubes(grid: SdfGrid):
    """Extract the zero level set as an outward-oriented triangle mesh.

    Returns ``(mesh, touches_boundary)``. When ``touches_boundary`` is true
    the surface is cut open by the grid walls.
    """
    v = grid.values
    border = np.concatenate([v[[0, -1]].ravel(), v[:, [0, -1]].ravel(), v[:, :, [0, -1]].ravel()])
    touches = bool((border <= 0).any())
    if touches:
        warnings.warn("zero level set touches the grid boundary; surface will be open")
    if not (v.min() < 0 < v.max()):
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), np.int64)), touches
    verts, faces, _, _ = measure.marching_cubes(
        v, level=0.0, spacing=(grid.spacing,) * 3, allow_degenerate=False
    )
    verts = verts.astype(np.float64) + grid.origin
    # merge coincident vertices, then drop collapsed faces
    uniq, inv = np.unique(verts, axis=0, return_inverse=True)
    faces = inv.reshape(-1)[faces]
    ok = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 2] != faces[:, 0])
    faces = faces[ok]
    used = np.unique(faces)
    remap = np.full(len(uniq), -1, np.int64)
    remap[used] = np.arange(len(used))
    return TriMesh(uniq[used], remap[faces]), touches


def extract_seam(a: SdfGrid, b: SdfGrid, merged: TriMesh, tau: float) -> np.ndarray:
    """Vertices of ``merged`` lying within ``tau`` of both input surfaces."""
    if merged.n_vertices == 0 or tau <= 0:
        return np.zeros((0, 3))
    sa = a.interpolate(merged.vertices)
    sb = b.interpolate(merged.vertices)
    keep = (np.abs(sa) < tau) & (np.abs(sb) < tau)
    return merged.vertices[keep].copy()


def _near(points, seam, eps):
    if len(seam) == 0 or len(points) == 0:
        return np.zeros(0, np.int64)
    d, _ = cKDTree(seam).query(points)
    return np.flatnonzero(d < eps)


def extract_regions(mesh_t: TriMesh, mesh_e: TriMesh, seam, eps0: float, eps1: float) -> RegionSelection:
    """Vertex sets within ``eps0`` (``t_in``, ``e_in``) and ``eps1`` (``t_opt``) of the seam."""
    if not eps1 < eps0:
        raise ValueError(f"eps1 ({eps1}) must be < eps0 ({eps0})")
    seam = np.asarray(seam, float).reshape(-1, 3)
    t_in = _near(mesh_t.vertices, seam, eps0)
    e_in = _near(mesh_e.vertices, seam, eps0)
    t_opt = _near(mesh_t.vertices, seam, eps1)
    return RegionSelection(seam, t_in, e_in, t_opt, eps0, eps1)


def classify_new_vs_preserved(merged: TriMesh, original: TriMesh, delta: float):
    """Split merged faces into (new, preserved) by distance to the original surface."""
    if merged.n_faces == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    if original.n_faces == 0:
        return np.arange(merged.n_faces), np.zeros(0, np.int64)
    d, _, _, _ = DistanceIndex(original).query(merged.vertices)
    near = d <= delta
    keep = near[merged.faces].all(1)
    return np.flatnonzero(~keep), np.flatnonzero(keep)


def faces_touching(mesh: TriMesh, vertex_ids) -> np.ndarray:
    mark = np.zeros(mesh.n_vertices, dtype=bool)
    mark[np.asarray(vertex_ids, dtype=np.int64)] = True
    return np.flatnonzero(mark[mesh.faces].any(1))


def count_components(mesh: TriMesh) -> int:
    """Connected components over shared vertices (union-find)."""
    parent = np.arange(mesh.n_vertices)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b, c in mesh.faces.tolist():
        ra, rb, rc = find(a), find(b), find(c)
        parent[rb] = ra
        parent[find(rc)] = ra
    used = np.unique(mesh.faces)
    return len({find(int(i)) for i in used})
