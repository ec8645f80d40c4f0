"""Direct solves with prescribed variables that return reactions.

For a symmetric matrix split into free (1) and fixed (2) variables::

    [A11 A12] [x1]   [f1]   [ 0]
    [A21 A22] [x2] = [f2] + [r2]

``solve`` takes ``f`` and ``x2`` and returns ``x1`` and the reactions
``r2 = A21 x1 + A22 x2 - f2``. The free block is factored once by SuperLU
with a symmetric fill-reducing ordering and no numerical pivoting, so the
pivots are those of a symmetric LDL^T factorization and can be checked for
positivity.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .exceptions import SingularBlockError

__all__ = ["ConstrainedFactorization", "SolveResult", "factor", "solve", "solve_multi"]

PIVOT_TOL = 1e-12


@dataclass(frozen=True)
class SolveResult:
    x: np.ndarray
    reactions: np.ndarray


@dataclass(frozen=True, eq=False)
class ConstrainedFactorization:
    n: int
    fixed: np.ndarray
    free: np.ndarray
    lu: object
    A12: sp.csr_matrix
    A21: sp.csr_matrix
    A22: sp.csr_matrix

    @property
    def n_fixed(self):
        return len(self.fixed)

    @property
    def n_free(self):
        return len(self.free)


def _check_fixed(fixed, n):
    fixed = np.asarray(fixed, dtype=np.int64).ravel()
    if len(np.unique(fixed)) != len(fixed):
        raise ValueError("fixed indices must be distinct")
    if fixed.size and (fixed.min() < 0 or fixed.max() >= n):
        raise ValueError(f"fixed indices must lie in [0, {n})")
    return np.sort(fixed)


def factor(matrix, fixed=()):
    """Factor the free-free block of ``matrix``; raise SingularBlockError if it is not positive definite."""
    A = sp.csr_matrix(matrix)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    fixed = _check_fixed(fixed, n)
    mask = np.ones(n, dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)

    A1 = A[free]
    A2 = A[fixed]
    A11 = A1[:, free].tocsc()
    lu = None
    if len(free):
        diag = A11.diagonal()
        scale = np.abs(diag).max()
        if not scale > 0 or (diag <= PIVOT_TOL * scale).any():
            k = int(np.flatnonzero(diag <= PIVOT_TOL * max(scale, 0.0))[0]) if scale > 0 else 0
            raise SingularBlockError(int(free[k]), float(diag[k]))
        try:
            lu = sla.splu(
                A11,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:
            raise SingularBlockError(-1, 0.0, f"free block is singular: {exc}") from None
        pivots = lu.U.diagonal()
        bad = np.flatnonzero(pivots <= PIVOT_TOL * scale)
        if bad.size or not np.array_equal(lu.perm_r, lu.perm_c):
            # perm_c[i] is the pivot position of original column i
            pos = int(bad[0]) if bad.size else 0
            col = int(np.flatnonzero(lu.perm_c == pos)[0])
            raise SingularBlockError(int(free[col]), float(pivots[pos]))
    return ConstrainedFactorization(
        n=n,
        fixed=fixed,
        free=free,
        lu=lu,
        A12=A1[:, fixed].tocsr(),
        A21=A2[:, free].tocsr(),
        A22=A2[:, fixed].tocsr(),
    )


def solve_multi(fact, rhs_block, fixed_values_block=None):
    """Column-wise solve for a block of loads (n, k) and fixed values (n_fixed, k).

    Returns SolveResult with ``x`` of shape (n, k) and ``reactions`` of shape
    (n_fixed, k).
    """
    F = np.asarray(rhs_block, dtype=float)
    if F.ndim != 2 or F.shape[0] != fact.n:
        raise ValueError(f"rhs block must have shape ({fact.n}, k), got {F.shape}")
    k = F.shape[1]
    if fixed_values_block is None:
        X2 = np.zeros((fact.n_fixed, k))
    else:
        X2 = np.asarray(fixed_values_block, dtype=float)
        if X2.shape != (fact.n_fixed, k):
            raise ValueError(f"fixed values must have shape ({fact.n_fixed}, {k}), got {X2.shape}")
    X = np.empty((fact.n, k))
    X[fact.fixed] = X2
    if fact.n_free:
        b = F[fact.free] - fact.A12 @ X2
        x1 = fact.lu.solve(np.asfortranarray(b))
        X[fact.free] = x1.reshape(fact.n_free, k)
    R = fact.A21 @ X[fact.free] + fact.A22 @ X2 - F[fact.fixed]
    return SolveResult(X, np.asarray(R))


def solve(fact, f, fixed_values=None):
    f = np.asarray(f, dtype=float)
    if f.shape != (fact.n,):
        raise ValueError(f"load vector must have shape ({fact.n},), got {f.shape}")
    x2 = None
    if fixed_values is not None:
        x2 = np.asarray(fixed_values, dtype=float)
        if x2.shape != (fact.n_fixed,):
            raise ValueError(f"fixed values must have shape ({fact.n_fixed},), got {x2.shape}")
        x2 = x2[:, None]
    res = solve_multi(fact, f[:, None], x2)
    return SolveResult(res.x[:, 0], res.reactions[:, 0])
