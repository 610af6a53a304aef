"""Deterministic software rasterizer for geometry channels (normals, masks, face ids)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation

from .mesh_core import DEGENERATE_AREA, TriMesh, point_in_triangle_2d

BACKGROUND_FACE = -1
NEUTRAL = 0.5


@dataclass(frozen=True)
class Camera:
    eye: tuple
    look_at: tuple
    up: tuple = (0.0, 0.0, 1.0)
    fov: float = math.radians(40.0)
    width: int = 512
    height: int = 512
    orthographic: bool = False
    # half-height of the view volume for orthographic cameras
    ortho_scale: float = 1.0

    def __post_init__(self):
        eye = np.asarray(self.eye, float)
        at = np.asarray(self.look_at, float)
        if np.allclose(eye, at):
            raise ValueError("camera eye and look_at coincide")
        if not 0 < self.fov < math.pi:
            raise ValueError("fov must lie in (0, pi)")
        if self.width < 8 or self.height < 8:
            raise ValueError("resolution must be at least 8x8")

    def basis(self):
        eye = np.asarray(self.eye, float)
        f = np.asarray(self.look_at, float) - eye
        f /= np.linalg.norm(f)
        up = np.asarray(self.up, float)
        r = np.cross(f, up)
        if np.linalg.norm(r) < 1e-9:
            r = np.cross(f, [0.0, 1.0, 0.0] if abs(f[1]) < 0.9 else [1.0, 0.0, 0.0])
        r /= np.linalg.norm(r)
        u = np.cross(r, f)
        return eye, f, r, u

    def pixel_rays(self, rows, cols):
        """Ray origins and directions through pixel centers (direction has unit depth)."""
        eye, f, r, u = self.basis()
        x, y = self._ndc(np.asarray(rows, float), np.asarray(cols, float))
        if self.orthographic:
            origin = eye + x[:, None] * r + y[:, None] * u
            return origin, np.broadcast_to(f, origin.shape)
        d = f + x[:, None] * r + y[:, None] * u
        return np.broadcast_to(eye, d.shape), d

    def _ndc(self, rows, cols):
        aspect = self.width / self.height
        half = self.ortho_scale if self.orthographic else math.tan(self.fov / 2)
        x = ((cols + 0.5) / self.width * 2 - 1) * half * aspect
        y = (1 - (rows + 0.5) / self.height * 2) * half
        return x, y

    def project(self, points):
        """Return (col, row, depth) continuous pixel coordinates of world points."""
        eye, f, r, u = self.basis()
        q = np.asarray(points, float) - eye
        z = q @ f
        aspect = self.width / self.height
        if self.orthographic:
            xs, ys, half = q @ r, q @ u, self.ortho_scale
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                xs, ys = (q @ r) / z, (q @ u) / z
            half = math.tan(self.fov / 2)
        col = (xs / (half * aspect) + 1) / 2 * self.width - 0.5
        row = (1 - ys / half) / 2 * self.height - 0.5
        return col, row, z


@dataclass(frozen=True, eq=False)
class RenderTarget:
    """Per-pixel world-space normal, subset mask, face id and depth.

    Background pixels hold NaN normals, face id -1 and infinite depth.
    ``ties`` counts pixels where two faces had exactly equal depth.
    """

    normal: np.ndarray
    mask: np.ndarray
    face_id: np.ndarray
    depth: np.ndarray
    ties: int = 0

    @property
    def foreground(self) -> np.ndarray:
        return self.face_id >= 0


def fibonacci_directions(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    rho = np.sqrt(np.maximum(0.0, 1 - z * z))
    phi = math.pi * (3 - math.sqrt(5)) * np.arange(n)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], 1)


def sample_viewpoints(count: int, center, radius: float, seed: int, *, fov: float = math.radians(40.0),
                      resolution=(512, 512), jitter: float = 0.1) -> list:
    """Cameras on a sphere looking at ``center``.

    Directions are a Fibonacci lattice under a seeded random rotation, with
    per-direction jitter of ``jitter`` times the ideal lattice spacing.
    """
    if count < 1 or radius <= 0:
        raise ValueError("need count >= 1 and radius > 0")
    rng = np.random.default_rng(seed)
    dirs = fibonacci_directions(count)
    dirs = Rotation.random(random_state=rng).apply(dirs)
    spacing = math.sqrt(4 * math.pi / count)
    dirs = dirs + rng.normal(size=dirs.shape) * (jitter * spacing / math.sqrt(3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    center = np.asarray(center, float)
    w, h = resolution
    cams = []
    for d in dirs:
        up = (0.0, 0.0, 1.0) if abs(d[2]) < 0.95 else (0.0, 1.0, 0.0)
        eye = center + radius * d
        cams.append(Camera(tuple(eye), tuple(center), up, fov, w, h))
    return cams


def render(mesh: TriMesh, camera: Camera, face_subset=None) -> RenderTarget:
    """Z-buffered rasterization with flat face normals, sampled at pixel centers.

    Equal depths resolve to the lower face index.
    """
    W, H = camera.width, camera.height
    normal = np.full((H, W, 3), np.nan)
    face_id = np.full((H, W), BACKGROUND_FACE, dtype=np.int64)
    depth = np.full((H, W), np.inf)
    mask = np.zeros((H, W), dtype=bool)
    if mesh.n_faces == 0:
        return RenderTarget(normal, mask, face_id, depth)

    V = mesh.vertices
    Fc = mesh.faces
    col, row, z = camera.project(V)
    near = 1e-9 if not camera.orthographic else -np.inf
    fn = mesh.face_normals()
    live = (mesh.face_areas() > DEGENERATE_AREA) & (z[Fc] > near).all(1)
    live = np.flatnonzero(live)
    c = col[Fc[live]]
    r = row[Fc[live]]
    c0 = np.clip(np.ceil(c.min(1)), 0, W).astype(np.int64)
    c1 = np.clip(np.floor(c.max(1)) + 1, 0, W).astype(np.int64)
    r0 = np.clip(np.ceil(r.min(1)), 0, H).astype(np.int64)
    r1 = np.clip(np.floor(r.max(1)) + 1, 0, H).astype(np.int64)
    wx = np.maximum(c1 - c0, 0)
    wy = np.maximum(r1 - r0, 0)
    cnt = wx * wy
    total = int(cnt.sum())
    if total == 0:
        return RenderTarget(normal, mask, face_id, depth)
    k = np.repeat(np.arange(len(live)), cnt)
    local = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    pc = c0[k] + local % wx[k]
    pr = r0[k] + local // wx[k]
    tri2 = np.stack([c[k], r[k]], axis=2)
    inside = point_in_triangle_2d(tri2, np.stack([pc, pr], 1).astype(float))
    k, pc, pr = k[inside], pc[inside], pr[inside]
    faces = live[k]

    origin, d = camera.pixel_rays(pr, pc)
    n = fn[faces]
    a = V[Fc[faces, 0]]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.einsum("ij,ij->i", n, a - origin) / np.einsum("ij,ij->i", n, d)
    ok = np.isfinite(t)
    faces, pc, pr, t = faces[ok], pc[ok], pr[ok], t[ok]

    pix = pr * W + pc
    o = np.lexsort((faces, t, pix))
    pix_o = pix[o]
    first = np.r_[True, pix_o[1:] != pix_o[:-1]]
    win = o[first]
    ties = 0
    if len(o) > 1:
        same = ~first[1:] & np.r_[first[:-1]]  # second entry of each pixel
        second = o[1:][same]
        firstp = o[:-1][same]
        ties = int(np.sum(t[second] == t[firstp]))
    rr, cc = pr[win], pc[win]
    face_id[rr, cc] = faces[win]
    depth[rr, cc] = t[win]
    normal[rr, cc] = fn[faces[win]]
    if face_subset is None:
        mask = face_id >= 0
    else:
        sel = np.zeros(mesh.n_faces + 1, dtype=bool)
        sel[np.asarray(list(face_subset), dtype=np.int64)] = True
        mask = sel[face_id]  # index -1 hits the trailing False
    return RenderTarget(normal, mask, face_id, depth, ties)


def encode_normal_image(target: RenderTarget, restrict_to_mask: bool = False) -> np.ndarray:
    """Map normals to [0, 1] via (n + 1) / 2; background is neutral gray."""
    keep = target.mask if restrict_to_mask else target.foreground
    img = np.full(target.normal.shape, NEUTRAL)
    img[keep] = (target.normal[keep] + 1.0) / 2.0
    return img


def decode_normal_image(img: np.ndarray) -> np.ndarray:
    """Inverse of the encoding, re-normalized; zero-length vectors stay zero."""
    n = 2.0 * np.asarray(img, float) - 1.0
    length = np.linalg.norm(n, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(length > 1e-12, n / length, 0.0)


def dump_target(target: RenderTarget, prefix) -> None:
    """Write each channel of ``target`` as an 8-bit PNG for inspection."""
    from PIL import Image

    prefix = Path(prefix)
    img = encode_normal_image(target)
    Image.fromarray(np.round(img * 255).astype(np.uint8)).save(f"{prefix}_normal.png")
    Image.fromarray(target.mask.astype(np.uint8) * 255).save(f"{prefix}_mask.png")
    d = target.depth.copy()
    fg = np.isfinite(d)
    if fg.any():
        lo, hi = d[fg].min(), d[fg].max()
        d[fg] = (d[fg] - lo) / max(hi - lo, 1e-12)
    d[~fg] = 1.0
    Image.fromarray(np.round((1 - d) * 255).astype(np.uint8)).save(f"{prefix}_depth.png")
    fid = target.face_id
    rgb = np.zeros(fid.shape + (3,), np.uint8)
    h = (fid.astype(np.uint64) * np.uint64(2654435761)) & np.uint64(0xFFFFFF)
    rgb[..., 0] = (h >> np.uint64(16)) & np.uint64(255)
    rgb[..., 1] = (h >> np.uint64(8)) & np.uint64(255)
    rgb[..., 2] = h & np.uint64(255)
    rgb[fid < 0] = 0
    Image.fromarray(rgb).save(f"{prefix}_faces.png")
