"""Bowyer-Watson Delaunay triangulation with filtered exact predicates.

Points exactly on a circumcircle are treated as outside (not in conflict),
which gives a deterministic triangulation of cocircular configurations.
"""
from __future__ import annotations

from fractions import Fraction

import numpy as np

_EPS = np.finfo(float).eps / 2
_CCW_BOUND = (3.0 + 16.0 * _EPS) * _EPS
_ICC_BOUND = (10.0 + 96.0 * _EPS) * _EPS


class DegenerateInputError(ValueError):
    pass


def orient2d(a, b, c) -> int:
    """Sign of twice the signed area of (a, b, c); +1 for counter-clockwise."""
    l = (a[0] - c[0]) * (b[1] - c[1])
    r = (a[1] - c[1]) * (b[0] - c[0])
    det = l - r
    if abs(det) > _CCW_BOUND * (abs(l) + abs(r)):
        return 1 if det > 0 else -1
    fa = [Fraction(x) for x in a]
    fb = [Fraction(x) for x in b]
    fc = [Fraction(x) for x in c]
    ex = (fa[0] - fc[0]) * (fb[1] - fc[1]) - (fa[1] - fc[1]) * (fb[0] - fc[0])
    return (ex > 0) - (ex < 0)


def incircle(a, b, c, d) -> int:
    """+1 if ``d`` is strictly inside the circumcircle of counter-clockwise (a, b, c)."""
    adx, ady = a[0] - d[0], a[1] - d[1]
    bdx, bdy = b[0] - d[0], b[1] - d[1]
    cdx, cdy = c[0] - d[0], c[1] - d[1]
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    t1 = bdx * cdy - cdx * bdy
    t2 = cdx * ady - adx * cdy
    t3 = adx * bdy - bdx * ady
    det = alift * t1 + blift * t2 + clift * t3
    perm = (alift * (abs(bdx * cdy) + abs(cdx * bdy)) + blift * (abs(cdx * ady) + abs(adx * cdy))
            + clift * (abs(adx * bdy) + abs(bdx * ady)))
    if abs(det) > _ICC_BOUND * perm:
        return 1 if det > 0 else -1
    A = [Fraction(x) - Fraction(d[0]) if i == 0 else Fraction(x) - Fraction(d[1]) for i, x in enumerate(a)]
    B = [Fraction(x) - Fraction(d[0]) if i == 0 else Fraction(x) - Fraction(d[1]) for i, x in enumerate(b)]
    C = [Fraction(x) - Fraction(d[0]) if i == 0 else Fraction(x) - Fraction(d[1]) for i, x in enumerate(c)]
    ex = ((A[0] ** 2 + A[1] ** 2) * (B[0] * C[1] - C[0] * B[1])
          + (B[0] ** 2 + B[1] ** 2) * (C[0] * A[1] - A[0] * C[1])
          + (C[0] ** 2 + C[1] ** 2) * (A[0] * B[1] - B[0] * A[1]))
    return (ex > 0) - (ex < 0)


def _insertion_order(P):
    """Snake order over a coarse grid so consecutive points are close (short walks)."""
    n = len(P)
    k = max(1, int(np.sqrt(n / 4)))
    lo = P.min(0)
    span = np.maximum(P.max(0) - lo, 1e-300)
    cell = np.minimum((k * (P - lo) / span).astype(np.int64), k - 1)
    col = np.where(cell[:, 1] % 2 == 0, cell[:, 0], k - 1 - cell[:, 0])
    return np.lexsort((P[:, 1], P[:, 0], col, cell[:, 1]))


def delaunay(points) -> np.ndarray:
    """Triangulate distinct 2D points; returns counter-clockwise triangles (T, 3).

    Raises :class:`DegenerateInputError` for fewer than 3 points, duplicate
    points or an all-collinear set.
    """
    P = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(P)
    if n < 3:
        raise DegenerateInputError(f"need at least 3 points, got {n}")
    if not np.isfinite(P).all():
        raise DegenerateInputError("non-finite point coordinates")
    if len(np.unique(P, axis=0)) != n:
        raise DegenerateInputError("duplicate points")
    pts = [tuple(p) for p in P.tolist()]
    i0 = 0
    i1 = next((i for i in range(1, n) if pts[i] != pts[i0]), None)
    if i1 is None or all(orient2d(pts[i0], pts[i1], pts[j]) == 0 for j in range(n)):
        raise DegenerateInputError("all points are collinear")

    lo = P.min(0)
    hi = P.max(0)
    c = 0.5 * (lo + hi)
    r = max(float((hi - lo).max()), 1e-12) * 1e5
    pts += [(c[0] - 2 * r, c[1] - r), (c[0] + 2 * r, c[1] - r), (c[0], c[1] + 2 * r)]
    s0, s1, s2 = n, n + 1, n + 2

    tv = [[s0, s1, s2]]   # triangle vertices, counter-clockwise
    tn = [[-1, -1, -1]]   # neighbor opposite each vertex
    alive = [True]
    last = 0

    for i in _insertion_order(P).tolist():
        p = pts[i]
        # visibility walk
        t = last
        if not alive[t]:
            t = len(tv) - 1
            while not alive[t]:
                t -= 1
        steps = 0
        while True:
            v = tv[t]
            moved = False
            for k in range(3):
                a, b = v[(k + 1) % 3], v[(k + 2) % 3]
                if orient2d(pts[a], pts[b], p) < 0:
                    t = tn[t][k]
                    moved = True
                    break
            if not moved:
                break
            steps += 1
            if steps > 4 * len(tv) + 10:
                raise RuntimeError("point location failed to terminate")
        # cavity of triangles whose circumcircle strictly contains p
        cavity = {t}
        stack = [t]
        while stack:
            u = stack.pop()
            for nb in tn[u]:
                if nb >= 0 and nb not in cavity:
                    a, b, cc = tv[nb]
                    if incircle(pts[a], pts[b], pts[cc], p) > 0:
                        cavity.add(nb)
                        stack.append(nb)
        # star the cavity boundary from p
        by_start = {}
        by_end = {}
        new = []
        for u in sorted(cavity):
            v = tv[u]
            for k in range(3):
                nb = tn[u][k]
                if nb in cavity:
                    continue
                a, b = v[(k + 1) % 3], v[(k + 2) % 3]
                if orient2d(pts[a], pts[b], p) <= 0:
                    raise RuntimeError("cavity is not star-shaped; inconsistent predicates")
                w = len(tv)
                tv.append([i, a, b])
                tn.append([nb, -1, -1])
                alive.append(True)
                if nb >= 0:
                    tn[nb][tn[nb].index(u)] = w
                by_start[a] = w
                by_end[b] = w
                new.append(w)
            alive[u] = False
        for w in new:
            _, a, b = tv[w]
            tn[w][1] = by_start[b]  # edge (b, p)
            tn[w][2] = by_end[a]    # edge (p, a)
        last = new[0]

    tris = np.array([v for v, al in zip(tv, alive) if al], dtype=np.int64)
    tris = tris[(tris < n).all(1)]
    return tris


def circumcircle_violations(points, triangles, tol: float = 1e-12) -> int:
    """Brute-force count of (triangle, point) pairs breaking the empty-circle rule."""
    P = np.asarray(points, float)
    T = np.asarray(triangles, np.int64)
    a, b, c = P[T[:, 0]], P[T[:, 1]], P[T[:, 2]]
    d = 2 * (a[:, 0] * (b[:, 1] - c[:, 1]) + b[:, 0] * (c[:, 1] - a[:, 1]) + c[:, 0] * (a[:, 1] - b[:, 1]))
    sa, sb, sc = (a ** 2).sum(1), (b ** 2).sum(1), (c ** 2).sum(1)
    ux = (sa * (b[:, 1] - c[:, 1]) + sb * (c[:, 1] - a[:, 1]) + sc * (a[:, 1] - b[:, 1])) / d
    uy = (sa * (c[:, 0] - b[:, 0]) + sb * (a[:, 0] - c[:, 0]) + sc * (b[:, 0] - a[:, 0])) / d
    center = np.stack([ux, uy], 1)
    r = np.linalg.norm(a - center, axis=1)
    count = 0
    for s in range(0, len(T), 256):
        dist = np.linalg.norm(P[None, :, :] - center[s:s + 256, None, :], axis=2)
        inside = dist < r[s:s + 256, None] * (1 - tol) - tol
        inside[np.arange(len(inside))[:, None], T[s:s + 256]] = False
        count += int(inside.sum())
    return count
