"""Poisson image editing on regular pixel grids (5-point Laplacian)."""
from __future__ import annotations

import numpy as np
from scipy import sparse

from .linalg import SparseSystem, cg_solve

_N4 = ((-1, 0), (1, 0), (0, -1), (0, 1))


class MaskBorderError(ValueError):
    pass


def boundary_pixels(mask: np.ndarray) -> np.ndarray:
    """Pixels outside ``mask`` that are 4-adjacent to it."""
    m = np.asarray(mask, bool)
    grown = m.copy()
    grown[1:] |= m[:-1]
    grown[:-1] |= m[1:]
    grown[:, 1:] |= m[:, :-1]
    grown[:, :-1] |= m[:, 1:]
    return grown & ~m


def erode_border(mask: np.ndarray) -> np.ndarray:
    m = np.array(mask, bool)
    m[[0, -1], :] = False
    m[:, [0, -1]] = False
    return m


def _as3(img):
    a = np.asarray(img, dtype=np.float64)
    return (a[..., None], True) if a.ndim == 2 else (a, False)


def build_system(target, source, mask, mixed: bool = False):
    """Assemble the masked Poisson system; returns ``(SparseSystem, pixel coordinates)``."""
    t, _ = _as3(target)
    s, _ = _as3(source)
    m = np.asarray(mask, bool)
    H, W = m.shape
    if t.shape[:2] != (H, W) or s.shape != t.shape:
        raise ValueError(f"shape mismatch: target {t.shape}, source {s.shape}, mask {m.shape}")
    if m[[0, -1], :].any() or m[:, [0, -1]].any():
        raise MaskBorderError("mask touches the image border; no boundary ring exists there")
    coords = np.argwhere(m)
    n = len(coords)
    index = np.full((H, W), -1, dtype=np.int64)
    index[coords[:, 0], coords[:, 1]] = np.arange(n)
    rows, cols = [np.arange(n)], [np.arange(n)]
    vals = [np.full(n, 4.0)]
    b = np.zeros((n, t.shape[2]))
    pr, pc = coords[:, 0], coords[:, 1]
    for dr, dc in _N4:
        qr, qc = pr + dr, pc + dc
        qi = index[qr, qc]
        inside = qi >= 0
        rows.append(np.flatnonzero(inside))
        cols.append(qi[inside])
        vals.append(-np.ones(inside.sum()))
        gs = s[pr, pc] - s[qr, qc]
        if mixed:
            gt = t[pr, pc] - t[qr, qc]
            gs = np.where(np.abs(gt) > np.abs(gs), gt, gs)
        b += gs
        b[~inside] += t[qr[~inside], qc[~inside]]
    A = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return SparseSystem(A, b), coords


def poisson_blend(target, source, mask, *, mixed: bool = False, erode: bool = False,
                  tol: float = 1e-10, clamp: bool = True):
    """Blend ``source`` into ``target`` inside ``mask`` keeping source gradients.

    Channels are solved independently; pixels outside the mask are returned
    unchanged. With ``erode`` a mask touching the image border is trimmed
    by one pixel instead of raising.
    """
    m = np.asarray(mask, bool)
    if erode:
        m = erode_border(m)
    t, squeeze = _as3(target)
    system, coords = build_system(target, source, m, mixed=mixed)
    out = t.copy()
    if len(coords):
        x, _ = cg_solve(system, tol=tol)
        if clamp:
            x = np.clip(x, 0.0, 1.0)
        out[coords[:, 0], coords[:, 1]] = x
    return out[..., 0] if squeeze else out
