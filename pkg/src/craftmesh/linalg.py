"""Sparse symmetric systems: conjugate gradients and a dense LU oracle."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import sparse

DENSE_LIMIT = 5000


class NumericError(ArithmeticError):
    pass


class SingularMatrixError(np.linalg.LinAlgError):
    def __init__(self, pivot: int, value: float):
        super().__init__(f"matrix is singular to working precision at pivot {pivot} (|u|={value:.3e})")
        self.pivot = pivot


@dataclass(frozen=True)
class SparseSystem:
    """Symmetric matrix ``A`` with one right-hand side per column of ``b``."""

    A: sparse.csr_matrix
    b: np.ndarray

    def __post_init__(self):
        A = sparse.csr_matrix(self.A, dtype=np.float64)
        A.sum_duplicates()
        A.sort_indices()
        b = np.asarray(self.b, dtype=np.float64)
        if b.ndim == 1:
            b = b[:, None]
        if A.shape[0] != A.shape[1] or b.shape[0] != A.shape[0]:
            raise ValueError(f"shape mismatch: A {A.shape}, b {b.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def check(self, sym_tol: float = 1e-12):
        """Raise if the system violates symmetry, positivity of the diagonal or finiteness."""
        if not (np.isfinite(self.A.data).all() and np.isfinite(self.b).all()):
            raise NumericError("non-finite entries in system")
        asym = abs(self.A - self.A.T)
        if asym.nnz and asym.max() > sym_tol:
            raise ValueError(f"matrix not symmetric (max asymmetry {asym.max():.3e})")
        d = self.A.diagonal()
        if self.n and d.min() <= 0:
            raise ValueError(f"non-positive diagonal entry at row {int(np.argmin(d))}")


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    history: tuple = ()


def dirichlet_reduce(A, b, fixed, values):
    """Eliminate the unknowns ``fixed`` (set to ``values``) from ``A x = b``.

    Returns ``(system on free unknowns, free index array)``. The reduced
    matrix stays symmetric.
    """
    A = sparse.csr_matrix(A)
    n = A.shape[0]
    b = np.asarray(b, dtype=np.float64)
    if b.ndim == 1:
        b = b[:, None]
    fixed = np.asarray(fixed, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64).reshape(len(fixed), -1)
    is_fixed = np.zeros(n, dtype=bool)
    is_fixed[fixed] = True
    free = np.flatnonzero(~is_fixed)
    A_ff = A[free][:, free]
    rhs = b[free] - A[free][:, fixed] @ values
    return SparseSystem(A_ff, rhs), free


def cg_solve(system: SparseSystem, tol: float = 1e-8, max_iter: int | None = None,
             jacobi: bool = False, x0=None):
    """Conjugate gradients with minimal-residual smoothing.

    All right-hand sides are iterated together, each with its own step
    sizes. The returned iterate is the smoothed one, whose residual norm is
    non-increasing by construction. Returns ``(x, SolveReport)``.
    """
    A = system.A
    b = system.b
    n, k = b.shape
    if not (np.isfinite(A.data).all() and np.isfinite(b).all()):
        raise NumericError("non-finite values in system")
    if max_iter is None:
        max_iter = 10 * max(n, 1)
    bnorm = np.linalg.norm(b, axis=0)
    scale = np.where(bnorm > 0, bnorm, 1.0)
    x = np.zeros((n, k)) if x0 is None else np.array(x0, dtype=np.float64).reshape(n, k)
    r = b - A @ x
    if n == 0:
        return x, SolveReport(0, 0.0, True, (0.0,))
    dinv = 1.0 / A.diagonal() if jacobi else None
    z = r * dinv[:, None] if jacobi else r
    p = z.copy()
    rz = np.einsum("ij,ij->j", r, z)

    # smoothed iterate y with residual s
    y = x.copy()
    s = r.copy()
    rel = np.linalg.norm(s, axis=0) / scale
    history = [float(rel.max())]
    it = 0
    active = rel > tol
    while active.any() and it < max_iter:
        it += 1
        Ap = A @ p
        pAp = np.einsum("ij,ij->j", p, Ap)
        with np.errstate(divide="ignore", invalid="ignore"):
            alpha = np.where(active & (pAp != 0), rz / pAp, 0.0)
        x += alpha * p
        r -= alpha * Ap
        d = r - s
        dd = np.einsum("ij,ij->j", d, d)
        with np.errstate(divide="ignore", invalid="ignore"):
            eta = np.where(active & (dd > 0), -np.einsum("ij,ij->j", s, d) / dd, 0.0)
        s += eta * d
        y += eta * (x - y)
        if not (np.isfinite(x).all() and np.isfinite(s).all()):
            raise NumericError(f"non-finite iterate at CG iteration {it}")
        rel = np.linalg.norm(s, axis=0) / scale
        history.append(float(rel.max()))
        active = rel > tol
        z = r * dinv[:, None] if jacobi else r
        rz_new = np.einsum("ij,ij->j", r, z)
        with np.errstate(divide="ignore", invalid="ignore"):
            beta = np.where(active & (rz != 0), rz_new / rz, 0.0)
        rz = rz_new
        p = z + beta * p
    final = float(rel.max())
    return y, SolveReport(it, final, final <= tol, tuple(history))


def dense_solve(system: SparseSystem) -> np.ndarray:
    """LU with partial pivoting; used as an independent oracle for CG."""
    n = system.n
    if n > DENSE_LIMIT:
        raise ValueError(f"dense solve refused for n={n} > {DENSE_LIMIT}")
    if n == 0:
        return np.zeros_like(system.b)
    M = system.A.toarray()
    with warnings.catch_warnings():
        # exact singularity only warns here; the pivot scan below decides
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=True, overwrite_a=True)
    u = np.abs(np.diag(lu))
    tiny = n * np.finfo(float).eps * max(u.max(), 1.0)
    if (u <= tiny).any():
        i = int(np.flatnonzero(u <= tiny)[0])
        raise SingularMatrixError(i, float(u[i]))
    return scipy.linalg.lu_solve((lu, piv), system.b)


def laplacian_path(n: int) -> sparse.csr_matrix:
    """Combinatorial Laplacian of a path graph on ``n`` nodes."""
    main = np.full(n, 2.0)
    main[[0, -1]] = 1.0
    off = -np.ones(n - 1)
    return sparse.diags([off, main, off], [-1, 0, 1], format="csr")
