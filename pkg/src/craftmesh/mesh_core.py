"""Triangle mesh data model, OBJ I/O, topology and distance queries."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

DEGENERATE_AREA = 1e-12


class MeshFormatError(ValueError):
    """Unparseable mesh file; message carries path and line number."""


class MeshValidationError(ValueError):
    pass


class DegenerateFaceError(ValueError):
    pass


class TopologyError(ValueError):
    pass


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Indexed triangle mesh.

    ``uvs`` are stored per face corner with shape ``(F, 3, 2)``;
    ``vertex_colors`` per vertex with shape ``(V, 3)``.
    """

    vertices: np.ndarray
    faces: np.ndarray
    uvs: Optional[np.ndarray] = None
    vertex_colors: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "vertices", _frozen(v, np.float64))
        object.__setattr__(self, "faces", _frozen(f, np.int64))
        if self.uvs is not None:
            uv = np.asarray(self.uvs, dtype=np.float64)
            if uv.shape != (len(f), 3, 2):
                raise MeshValidationError(
                    f"uvs must have shape ({len(f)}, 3, 2), got {uv.shape}"
                )
            object.__setattr__(self, "uvs", _frozen(uv, np.float64))
        if self.vertex_colors is not None:
            vc = np.asarray(self.vertex_colors, dtype=np.float64)
            if vc.shape != (len(v), 3):
                raise MeshValidationError(
                    f"vertex_colors must have shape ({len(v)}, 3), got {vc.shape}"
                )
            object.__setattr__(self, "vertex_colors", _frozen(vc, np.float64))
        self.validate()

    def validate(self):
        f = self.faces
        if len(f) == 0:
            return
        if f.min() < 0 or f.max() >= len(self.vertices):
            bad = np.flatnonzero((f < 0).any(1) | (f >= len(self.vertices)).any(1))
            raise MeshValidationError(
                f"face index out of range for {len(self.vertices)} vertices "
                f"(faces {bad[:10].tolist()})"
            )
        rep = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 2] == f[:, 0])
        if rep.any():
            raise MeshValidationError(
                f"faces repeat a vertex index: {np.flatnonzero(rep)[:10].tolist()}"
            )
        if not np.isfinite(self.vertices).all():
            raise MeshValidationError("non-finite vertex coordinates")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def bounds(self):
        if self.n_vertices == 0:
            return np.zeros(3), np.zeros(3)
        return self.vertices.min(0), self.vertices.max(0)

    def diagonal(self) -> float:
        lo, hi = self.bounds()
        return float(np.linalg.norm(hi - lo))

    def with_vertices(self, vertices) -> "TriMesh":
        return TriMesh(vertices, self.faces, self.uvs, self.vertex_colors)

    def without_attributes(self) -> "TriMesh":
        return TriMesh(self.vertices, self.faces)

    def transformed(self, scale: float, offset) -> "TriMesh":
        """Return a copy with ``v * scale + offset``."""
        return self.with_vertices(self.vertices * scale + np.asarray(offset, float))

    def submesh(self, face_ids):
        """Extract faces ``face_ids``; returns (mesh, original vertex ids)."""
        face_ids = np.asarray(sorted(set(int(i) for i in face_ids)), dtype=np.int64)
        sub = self.faces[face_ids]
        used = np.unique(sub)
        remap = np.full(self.n_vertices, -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        uvs = self.uvs[face_ids] if self.uvs is not None else None
        vc = self.vertex_colors[used] if self.vertex_colors is not None else None
        return TriMesh(self.vertices[used], remap[sub], uvs, vc), used

    @cached_property
    def topology(self) -> "Topology":
        return Topology(self)

    def face_normals(self) -> np.ndarray:
        """Unit normals; rows for degenerate faces are zero."""
        c = _face_cross(self.vertices, self.faces)
        n2 = np.linalg.norm(c, axis=1)
        out = np.zeros_like(c)
        ok = 0.5 * n2 > DEGENERATE_AREA
        out[ok] = c[ok] / n2[ok, None]
        return out

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(_face_cross(self.vertices, self.faces), axis=1)


def concatenate(meshes) -> TriMesh:
    """Disjoint union of meshes (attributes dropped unless all carry them)."""
    meshes = list(meshes)
    verts, faces, off = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + off)
        off += m.n_vertices
    uvs = None
    if meshes and all(m.uvs is not None for m in meshes):
        uvs = np.concatenate([m.uvs for m in meshes])
    return TriMesh(
        np.concatenate(verts) if verts else np.zeros((0, 3)),
        np.concatenate(faces) if faces else np.zeros((0, 3), np.int64),
        uvs,
    )


def _face_cross(vertices, faces):
    a = vertices[faces[:, 0]]
    return np.cross(vertices[faces[:, 1]] - a, vertices[faces[:, 2]] - a)


class Topology:
    """Vertex-face incidence and the undirected edge table of a mesh."""

    def __init__(self, mesh: TriMesh):
        f = mesh.faces
        nv = mesh.n_vertices
        nf = len(f)
        # vertex -> faces, CSR layout
        flat = f.reshape(-1)
        order = np.argsort(flat, kind="stable")
        self.vf_faces = (order // 3).astype(np.int64)
        self.vf_offsets = np.zeros(nv + 1, dtype=np.int64)
        np.cumsum(np.bincount(flat, minlength=nv), out=self.vf_offsets[1:])

        he = np.stack([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=1).reshape(-1, 2)
        key = np.sort(he, axis=1)
        self.edges, inverse, counts = np.unique(
            key, axis=0, return_inverse=True, return_counts=True
        )
        inverse = inverse.reshape(-1)
        if nf and counts.max() > 2:
            bad = self.edges[counts > 2][:5].tolist()
            raise TopologyError(f"non-manifold edges (more than 2 faces): {bad}")
        self.face_edges = inverse.reshape(nf, 3)
        self.edge_faces = np.full((len(self.edges), 2), -1, dtype=np.int64)
        he_face = np.repeat(np.arange(nf), 3)
        o = np.argsort(inverse, kind="stable")
        inv_s = inverse[o]
        starts = np.r_[True, inv_s[1:] != inv_s[:-1]] if len(o) else np.zeros(0, bool)
        self.edge_faces[inv_s[starts], 0] = he_face[o[starts]]
        self.edge_faces[inv_s[~starts], 1] = he_face[o[~starts]]
        self.boundary = self.edge_faces[:, 1] < 0
        self.n_vertices = nv

    def vertex_faces(self, i: int) -> np.ndarray:
        return self.vf_faces[self.vf_offsets[i]:self.vf_offsets[i + 1]]

    @property
    def is_closed(self) -> bool:
        return len(self.edges) > 0 and not self.boundary.any()

    def euler_characteristic(self, n_faces: int) -> int:
        used = len(np.unique(self.edges)) if len(self.edges) else 0
        return used - len(self.edges) + n_faces

    def neighbors(self):
        """Per-vertex sorted neighbor arrays (one-ring over edges)."""
        nbr = [[] for _ in range(self.n_vertices)]
        for a, b in self.edges.tolist():
            nbr[a].append(b)
            nbr[b].append(a)
        return [np.array(sorted(n), dtype=np.int64) for n in nbr]

    def adjacency_matrix(self):
        from scipy import sparse

        e = self.edges
        n = self.n_vertices
        data = np.ones(2 * len(e))
        return sparse.csr_matrix(
            (data, (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(n, n)
        )


# ---------------------------------------------------------------------------
# file I/O


def load_mesh(path) -> TriMesh:
    """Read a triangle OBJ file (``v``, ``vt``, ``f`` records, 1-based)."""
    path = Path(path)
    verts, colors, tex, faces, ftex = [], [], [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            tok = s.split()
            tag = tok[0]
            try:
                if tag == "v":
                    if len(tok) not in (4, 7):
                        raise ValueError("expected 3 or 6 values")
                    verts.append([float(t) for t in tok[1:4]])
                    if len(tok) == 7:
                        colors.append([float(t) for t in tok[4:7]])
                elif tag == "vt":
                    if len(tok) < 3:
                        raise ValueError("expected at least 2 values")
                    tex.append([float(tok[1]), float(tok[2])])
                elif tag == "f":
                    if len(tok) != 4:
                        raise ValueError(f"only triangles supported, got {len(tok) - 1} corners")
                    vi, ti = [], []
                    for t in tok[1:]:
                        parts = t.split("/")
                        vi.append(_obj_index(parts[0], len(verts)))
                        if len(parts) > 1 and parts[1]:
                            ti.append(_obj_index(parts[1], len(tex)))
                    if ti and len(ti) != 3:
                        raise ValueError("texture indices on some corners only")
                    faces.append(vi)
                    ftex.append(ti or None)
                elif tag in ("vn", "o", "g", "s", "mtllib", "usemtl", "l", "vp"):
                    continue
                else:
                    raise ValueError(f"unknown record '{tag}'")
            except ValueError as exc:
                raise MeshFormatError(f"{path}:{lineno}: {exc}") from None

    if colors and len(colors) != len(verts):
        raise MeshFormatError(f"{path}: vertex colors on some vertices only")
    has_tex = [t is not None for t in ftex]
    uvs = None
    if faces and any(has_tex):
        if not all(has_tex):
            raise MeshFormatError(f"{path}: texture coordinates on some faces only")
        tex_a = np.array(tex, dtype=np.float64).reshape(-1, 2)
        idx = np.array(ftex, dtype=np.int64)
        if idx.min() < 0 or idx.max() >= len(tex_a):
            raise MeshValidationError(f"{path}: texture index out of range")
        uvs = tex_a[idx]
    v = np.array(verts, dtype=np.float64).reshape(-1, 3)
    f = np.array(faces, dtype=np.int64).reshape(-1, 3)
    vc = np.array(colors, dtype=np.float64) if colors else None
    try:
        return TriMesh(v, f, uvs, vc)
    except MeshValidationError as exc:
        raise MeshValidationError(f"{path}: {exc}") from None


def _obj_index(tok: str, count: int) -> int:
    i = int(tok)
    if i < 0:
        return count + i
    if i == 0:
        raise ValueError("OBJ indices are 1-based; got 0")
    return i - 1


def _fmt(x: float) -> str:
    return repr(float(x))


def save_mesh(mesh: TriMesh, path, mtllib: Optional[str] = None) -> None:
    path = Path(path)
    lines = []
    if mtllib:
        lines += [f"mtllib {mtllib}", "usemtl material0"]
    vc = mesh.vertex_colors
    for i, p in enumerate(mesh.vertices):
        if vc is None:
            lines.append(f"v {_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}")
        else:
            c = vc[i]
            lines.append(
                f"v {_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])} {_fmt(c[0])} {_fmt(c[1])} {_fmt(c[2])}"
            )
    if mesh.uvs is not None:
        flat = mesh.uvs.reshape(-1, 2)
        uniq, inv = np.unique(flat, axis=0, return_inverse=True)
        inv = inv.reshape(-1, 3)
        for u in uniq:
            lines.append(f"vt {_fmt(u[0])} {_fmt(u[1])}")
        for f, t in zip(mesh.faces + 1, inv + 1):
            lines.append(f"f {f[0]}/{t[0]} {f[1]}/{t[1]} {f[2]}/{t[2]}")
    else:
        for f in mesh.faces + 1:
            lines.append(f"f {f[0]} {f[1]} {f[2]}")
    data = "\n".join(lines) + ("\n" if lines else "")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(data)


# ---------------------------------------------------------------------------
# geometric queries


def face_normal(mesh: TriMesh, face: int) -> np.ndarray:
    """Unit normal of ``face`` following counter-clockwise winding."""
    a, b, c = mesh.vertices[mesh.faces[face]]
    n = np.cross(b - a, c - a)
    length = math.sqrt(float(n @ n))
    if 0.5 * length <= DEGENERATE_AREA:
        raise DegenerateFaceError(f"face {face} has area {0.5 * length:.3e}")
    return n / length


def closest_points_on_triangles(p, a, b, c):
    """Closest point on triangle (a, b, c) to p, row-wise.

    Returns ``(squared distance, closest point, barycentrics)``.
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    n = len(p)
    bary = np.empty((n, 3))
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        bary[:, 0] = 1.0 - v - w
        bary[:, 1] = v
        bary[:, 2] = w
        # regions applied from lowest to highest priority
        m = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        bary[m] = np.stack([np.zeros(m.sum()), 1 - t[m], t[m]], 1)
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        t = d2 / (d2 - d6)
        bary[m] = np.stack([1 - t[m], np.zeros(m.sum()), t[m]], 1)
        m = (d6 >= 0) & (d5 <= d6)
        bary[m] = (0.0, 0.0, 1.0)
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        t = d1 / (d1 - d3)
        bary[m] = np.stack([1 - t[m], t[m], np.zeros(m.sum())], 1)
        m = (d3 >= 0) & (d4 <= d3)
        bary[m] = (0.0, 1.0, 0.0)
        m = (d1 <= 0) & (d2 <= 0)
        bary[m] = (1.0, 0.0, 0.0)
    bad = ~np.isfinite(bary).all(1)
    if bad.any():
        # fully collapsed triangle: all corners coincide
        bary[bad] = (1.0, 0.0, 0.0)
    q = bary[:, :1] * a + bary[:, 1:2] * b + bary[:, 2:] * c
    d = p - q
    return np.einsum("ij,ij->i", d, d), q, bary


class DistanceIndex:
    """Axis-aligned bounding-volume hierarchy over the faces of a mesh."""

    LEAF_SIZE = 8

    def __init__(self, mesh: TriMesh):
        if mesh.n_faces == 0:
            raise ValueError("cannot index an empty mesh")
        self.mesh = mesh
        tri = mesh.vertices[mesh.faces]
        self._a = np.ascontiguousarray(tri[:, 0])
        self._b = np.ascontiguousarray(tri[:, 1])
        self._c = np.ascontiguousarray(tri[:, 2])
        normals = mesh.face_normals()
        self.plane_normal = normals
        self.plane_offset = np.einsum("ij,ij->i", normals, self._a)
        flo = tri.min(1)
        fhi = tri.max(1)
        cent = tri.mean(1)

        lo, hi, left, right, start, count = [], [], [], [], [], []
        order = np.arange(mesh.n_faces)
        # explicit stack: (node id, slice start, slice stop)
        self.order = order
        lo.append(None); hi.append(None); left.append(-1); right.append(-1)
        start.append(0); count.append(len(order))
        stack = [(0, 0, len(order))]
        while stack:
            node, s, e = stack.pop()
            idx = order[s:e]
            lo[node] = flo[idx].min(0)
            hi[node] = fhi[idx].max(0)
            if e - s <= self.LEAF_SIZE:
                start[node], count[node] = s, e - s
                continue
            c = cent[idx]
            axis = int(np.argmax(c.max(0) - c.min(0)))
            srt = np.argsort(c[:, axis], kind="stable")
            order[s:e] = idx[srt]
            mid = s + (e - s) // 2
            for child_s, child_e, slot in ((s, mid, left), (mid, e, right)):
                cid = len(lo)
                lo.append(None); hi.append(None); left.append(-1); right.append(-1)
                start.append(child_s); count.append(child_e - child_s)
                slot[node] = cid
                stack.append((cid, child_s, child_e))
            start[node], count[node] = s, e - s
        self.node_lo = np.array(lo)
        self.node_hi = np.array(hi)
        self.node_left = np.array(left, dtype=np.int64)
        self.node_right = np.array(right, dtype=np.int64)
        self.node_start = np.array(start, dtype=np.int64)
        self.node_count = np.array(count, dtype=np.int64)
        self._slab_bounds(tri, normals)
        self._leaf_faces = self._leaf_table()
        self._seed_tree = cKDTree(cent)

    def _slab_bounds(self, tri, normals):
        # per node: mean face normal and the range of vertex offsets along it
        nn = len(self.node_lo)
        self.slab_dir = np.zeros((nn, 3))
        self.slab_min = np.full(nn, -np.inf)
        self.slab_max = np.full(nn, np.inf)
        for node in range(nn):
            s, c = self.node_start[node], self.node_count[node]
            idx = self.order[s:s + c]
            d = normals[idx].sum(0)
            length = np.linalg.norm(d)
            if length < 1e-12:
                continue
            d /= length
            off = tri[idx].reshape(-1, 3) @ d
            self.slab_dir[node] = d
            self.slab_min[node] = off.min()
            self.slab_max[node] = off.max()

    def _leaf_table(self):
        leaves = np.flatnonzero(self.node_left < 0)
        table = np.full((len(self.node_lo), self.LEAF_SIZE), -1, dtype=np.int64)
        for n in leaves:
            s, c = self.node_start[n], self.node_count[n]
            table[n, :c] = self.order[s:s + c]
        return table

    def leaves(self):
        """Face index arrays of every leaf, in node order."""
        return [self._leaf_faces[n][self._leaf_faces[n] >= 0]
                for n in np.flatnonzero(self.node_left < 0)]

    def query(self, points, chunk: int = 16384):
        """Exact nearest face for each point.

        Returns ``(distance, face, closest point, barycentrics)``; ties go to
        the lower face index.
        """
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        n = len(pts)
        dist2 = np.empty(n)
        face = np.empty(n, dtype=np.int64)
        for s in range(0, n, chunk):
            dist2[s:s + chunk], face[s:s + chunk] = self._query_chunk(pts[s:s + chunk])
        d2, q, bary = closest_points_on_triangles(pts, self._a[face], self._b[face], self._c[face])
        return np.sqrt(dist2), face, q, bary

    def _query_chunk(self, p):
        n = len(p)
        _, seed = self._seed_tree.query(p)
        best, _, _ = closest_points_on_triangles(p, self._a[seed], self._b[seed], self._c[seed])
        best_face = seed.astype(np.int64)

        pt = np.arange(n)
        node = np.zeros(n, dtype=np.int64)
        while len(pt):
            lo = self.node_lo[node]
            hi = self.node_hi[node]
            pp = p[pt]
            gap = np.maximum(lo - pp, 0.0) + np.maximum(pp - hi, 0.0)
            bd = np.einsum("ij,ij->i", gap, gap)
            h = np.einsum("ij,ij->i", self.slab_dir[node], pp)
            sd = np.maximum(np.maximum(h - self.slab_max[node], self.slab_min[node] - h), 0.0)
            keep = (bd <= best[pt]) & (sd * sd <= best[pt] * (1 + 1e-9))
            pt, node = pt[keep], node[keep]
            is_leaf = self.node_left[node] < 0
            lp, ln = pt[is_leaf], node[is_leaf]
            if len(lp):
                faces = self._leaf_faces[ln]
                rp = np.repeat(lp, self.LEAF_SIZE)
                rf = faces.reshape(-1)
                ok = rf >= 0
                rp, rf = rp[ok], rf[ok]
                d2, _, _ = closest_points_on_triangles(p[rp], self._a[rf], self._b[rf], self._c[rf])
                # per point: smallest (d2, face), then merge with the running best
                o = np.lexsort((rf, d2, rp))
                firsts = o[np.r_[True, rp[o][1:] != rp[o][:-1]]]
                up, ud, uf = rp[firsts], d2[firsts], rf[firsts]
                better = (ud < best[up]) | ((ud == best[up]) & (uf < best_face[up]))
                best[up[better]] = ud[better]
                best_face[up[better]] = uf[better]
            ip, inode = pt[~is_leaf], node[~is_leaf]
            pt = np.concatenate([ip, ip])
            node = np.concatenate([self.node_left[inode], self.node_right[inode]])
        return best, best_face


def brute_force_distance(mesh: TriMesh, points):
    """Unsigned distance by scanning every face (test oracle)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tri = mesh.vertices[mesh.faces]
    out = np.empty(len(pts))
    for i, p in enumerate(pts):
        P = np.broadcast_to(p, (len(tri), 3))
        d2, _, _ = closest_points_on_triangles(P, tri[:, 0], tri[:, 1], tri[:, 2])
        out[i] = d2.min()
    return np.sqrt(out)


def winding_number(mesh: TriMesh, points, chunk: int = 4096) -> np.ndarray:
    """Generalized winding number via summed signed solid angles."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tri = mesh.vertices[mesh.faces]
    out = np.zeros(len(pts))
    per = max(1, chunk * 64 // max(1, len(tri)))
    for s in range(0, len(pts), per):
        p = pts[s:s + per, None, :]
        a = tri[None, :, 0] - p
        b = tri[None, :, 1] - p
        c = tri[None, :, 2] - p
        la = np.linalg.norm(a, axis=2)
        lb = np.linalg.norm(b, axis=2)
        lc = np.linalg.norm(c, axis=2)
        det = np.einsum("pfi,pfi->pf", a, np.cross(b, c))
        den = (la * lb * lc + np.einsum("pfi,pfi->pf", a, b) * lc
               + np.einsum("pfi,pfi->pf", b, c) * la + np.einsum("pfi,pfi->pf", c, a) * lb)
        out[s:s + per] = np.arctan2(det, den).sum(1) * 2.0 / (4.0 * math.pi)
    return out


def signed_distance(mesh: TriMesh, index: DistanceIndex, points):
    """Distance to ``mesh``, negative inside.

    Returns ``(values, is_signed)``. For open meshes ``is_signed`` is False
    and the values are unsigned.
    """
    if mesh.n_faces == 0:
        raise ValueError("signed distance of an empty mesh is undefined")
    pts = np.asarray(points, dtype=np.float64)
    scalar = pts.ndim == 1
    d, _, _, _ = index.query(pts.reshape(-1, 3))
    closed = mesh.topology.is_closed
    if closed:
        w = winding_number(mesh, pts.reshape(-1, 3))
        d = np.where(w > 0.5, -d, d)
    return (float(d[0]) if scalar else d), closed


def column_winding_numbers(mesh: TriMesh, xs, ys, zs) -> np.ndarray:
    """Integer winding numbers on the grid ``xs x ys x zs`` by +z ray crossings.

    Each crossing contributes the sign of the face normal's z component.
    Points on shared edges and vertices of the xy projection are assigned
    to exactly one face by a fixed infinitesimal perturbation, so the count
    is exact for closed, consistently oriented meshes.
    """
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    zs = np.asarray(zs, float)
    nx, ny, nz = len(xs), len(ys), len(zs)
    V = mesh.vertices
    F = mesh.faces
    p0, p1, p2 = V[F[:, 0]], V[F[:, 1]], V[F[:, 2]]
    area2 = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0])
    live = np.flatnonzero(area2 != 0)

    # candidate (face, column) pairs from xy bounding boxes
    tri = V[F[live]]
    ix0 = np.searchsorted(xs, tri[:, :, 0].min(1), side="left")
    ix1 = np.searchsorted(xs, tri[:, :, 0].max(1), side="right")
    iy0 = np.searchsorted(ys, tri[:, :, 1].min(1), side="left")
    iy1 = np.searchsorted(ys, tri[:, :, 1].max(1), side="right")
    wx = np.maximum(ix1 - ix0, 0)
    wy = np.maximum(iy1 - iy0, 0)
    cnt = wx * wy
    total = int(cnt.sum())
    w_col = np.zeros(0, np.int64)
    w_z = np.zeros(0)
    w_s = np.zeros(0)
    if total:
        fidx = np.repeat(np.arange(len(live)), cnt)
        local = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        cx = ix0[fidx] + local % wx[fidx]
        cy = iy0[fidx] + local // wx[fidx]
        px = xs[cx]
        py = ys[cy]
        faces = live[fidx]
        sigma = np.sign(area2[faces])
        inside = np.ones(total, dtype=bool)
        corners = (p0[faces], p1[faces], p2[faces])
        for k in range(3):
            a = corners[k]
            b = corners[(k + 1) % 3]
            inside &= _edge_claims(a[:, 0], a[:, 1], b[:, 0], b[:, 1], px, py, sigma)
        faces, px, py, cx, cy, sigma = (
            faces[inside], px[inside], py[inside], cx[inside], cy[inside], sigma[inside]
        )
        n = np.cross(p1[faces] - p0[faces], p2[faces] - p0[faces])
        a = p0[faces]
        w_z = a[:, 2] - (n[:, 0] * (px - a[:, 0]) + n[:, 1] * (py - a[:, 1])) / n[:, 2]
        w_col = cx * ny + cy
        w_s = sigma

    # sweep each column from +z downwards; queries sort before crossings at equal z
    q_col = np.repeat(np.arange(nx * ny), nz)
    q_z = np.tile(zs, nx * ny)
    col = np.concatenate([w_col, q_col])
    z = np.concatenate([w_z, q_z])
    typ = np.concatenate([np.ones(len(w_col)), np.zeros(len(q_col))])
    val = np.concatenate([w_s, np.zeros(len(q_col))])
    o = np.lexsort((typ, -z, col))
    csum = np.cumsum(val[o])
    col_o = col[o]
    starts = np.r_[True, col_o[1:] != col_o[:-1]]
    base = np.maximum.accumulate(np.where(starts, np.arange(len(o)), 0))
    before = np.where(base > 0, csum[base - 1], 0.0)
    # csum at a query includes only crossings strictly above it in the same column
    acc = csum - before
    result = np.empty(len(o))
    result[o] = acc
    out = result[len(w_col):]
    return np.rint(out).astype(np.int64).reshape(nx, ny, nz)


def _edge_claims(ax, ay, bx, by, px, py, sigma):
    """Half-open edge test with a global perturbation toward (-eps^2, +eps)."""
    swap = (ax > bx) | ((ax == bx) & (ay > by))
    cax = np.where(swap, bx, ax)
    cay = np.where(swap, by, ay)
    cbx = np.where(swap, ax, bx)
    cby = np.where(swap, ay, by)
    e = (cbx - cax) * (py - cay) - (cby - cay) * (px - cax)
    s = np.where(swap, -1.0, 1.0) * sigma
    return (e * s > 0) | ((e == 0) & (s > 0))


def point_in_triangle_2d(tri_uv, pts, sigma=None):
    """Half-open containment of 2D points in 2D triangles, row-wise."""
    a, b, c = tri_uv[:, 0], tri_uv[:, 1], tri_uv[:, 2]
    if sigma is None:
        sigma = np.sign((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    ok = sigma != 0
    for u, v in ((a, b), (b, c), (c, a)):
        ok &= _edge_claims(u[:, 0], u[:, 1], v[:, 0], v[:, 1], pts[:, 0], pts[:, 1], sigma)
    return ok


# ---------------------------------------------------------------------------
# primitive generators used by tests, fixtures and scripts


def icosphere(subdivisions: int = 3, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    faces = list(f)
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    V = np.array(verts) * radius + np.asarray(center, float)
    return TriMesh(V, np.array(faces, dtype=np.int64))


def box(lo=(-0.5, -0.5, -0.5), hi=(0.5, 0.5, 0.5)) -> TriMesh:
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    c = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], float)
    V = lo + c * (hi - lo)
    F = [(0, 1, 3), (0, 3, 2), (4, 6, 7), (4, 7, 5), (0, 4, 5), (0, 5, 1),
         (2, 3, 7), (2, 7, 6), (0, 2, 6), (0, 6, 4), (1, 5, 7), (1, 7, 3)]
    return TriMesh(V, np.array(F, dtype=np.int64))


def grid_heightfield(nx: int, ny: int, height, extent=(-0.5, 0.5, -0.5, 0.5)) -> TriMesh:
    """Open heightfield ``z = height(x, y)`` triangulated on a regular grid.

    UVs map the xy extent onto [0, 1]^2.
    """
    x0, x1, y0, y1 = extent
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    Z = height(X, Y)
    V = np.stack([X.ravel(), Y.ravel(), Z.ravel()], 1)
    idx = np.arange(nx * ny).reshape(ny, nx)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    F = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    uv_v = np.stack([(V[:, 0] - x0) / (x1 - x0), (V[:, 1] - y0) / (y1 - y0)], 1)
    return TriMesh(V, F, uv_v[F])
