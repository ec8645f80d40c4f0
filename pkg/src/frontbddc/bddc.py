"""BDDC preconditioner built on constrained solves with reactions.

Corner constraints are imposed as fixed variables of the subdomain
factorization; averages are imposed through Lagrange multipliers whose small
dense dual matrix ``C_f K_ff^{-1} C_f^T`` is factored once. Coarse basis
functions and the subdomain coarse matrices come out of a single block solve
with the corner values fixed, using the returned reactions.
"""
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ._parallel import pmap
from .constrained_solver import factor, solve, solve_multi
from .exceptions import (
    DegenerateDofError,
    DependentAveragesError,
    InsufficientConstraintsError,
    SingularBlockError,
)
from .partition import local_dirichlet

__all__ = [
    "InterfaceDofs",
    "interface_dofs",
    "SubdomainPreconditioner",
    "CoarseProblem",
    "AveragingOperator",
    "BDDCPreconditioner",
    "setup_subdomain",
    "assemble_coarse",
    "build_averaging",
    "apply",
    "coarse_numbering",
]

DUAL_TOL = 1e-12


@dataclass(frozen=True)
class InterfaceDofs:
    """Global interface unknowns: dofs of interface nodes that are not Dirichlet.

    ``local[i]`` are the subdomain-local dofs of subdomain ``i`` on the
    interface and ``position[i]`` their indices into the interface vector.
    """

    global_dofs: np.ndarray
    local: list
    position: list

    @property
    def size(self):
        return len(self.global_dofs)


def interface_dofs(decomposition):
    mesh = decomposition.mesh
    iface = decomposition.interface_nodes
    dofs = (3 * iface[:, None] + np.arange(3)).ravel()
    dirichlet = np.array(sorted(3 * n + d for n, d in mesh.dirichlet), dtype=np.int64)
    gdofs = np.setdiff1d(dofs, dirichlet)
    local, position = [], []
    for i in range(decomposition.n_parts):
        nodes = decomposition.subdomain_nodes[i]
        sub_dofs = (3 * nodes[:, None] + np.arange(3)).ravel()
        pos = np.searchsorted(gdofs, sub_dofs)
        pos = np.minimum(pos, max(len(gdofs) - 1, 0))
        hit = gdofs[pos] == sub_dofs if len(gdofs) else np.zeros(len(sub_dofs), dtype=bool)
        local.append(np.flatnonzero(hit))
        position.append(pos[hit])
    return InterfaceDofs(gdofs, local, position)


def coarse_numbering(plan):
    """Global coarse dof of every (corner node, direction) and of every average row.

    Returns ``(corner_index, n_coarse, fixed)`` where ``corner_index`` maps a
    corner node to its position among corners (coarse dofs ``3*pos + d``),
    averages follow the corner block in row order, and ``fixed`` lists the
    coarse dofs that sit on Dirichlet dofs.
    """
    corner_index = {int(c): k for k, c in enumerate(plan.corners)}
    n_coarse = 3 * len(plan.corners) + len(plan.average_rows)
    dirichlet = plan.decomposition.mesh.dirichlet
    fixed = [3 * k + d for c, k in corner_index.items() for d in range(3) if (c, d) in dirichlet]
    return corner_index, n_coarse, np.array(sorted(fixed), dtype=np.int64)


@dataclass(eq=False)
class SubdomainPreconditioner:
    index: int
    n: int
    corner_fact: object
    interface_fact: object
    interface_local: np.ndarray
    coarse_global: np.ndarray
    n_corner_dofs: int
    Cf: sp.csr_matrix
    dual_chol: np.ndarray
    psi: np.ndarray
    K_C: np.ndarray
    lam: np.ndarray
    timings: dict = field(default_factory=dict)

    @property
    def n_coarse(self):
        return len(self.coarse_global)

    @property
    def n_averages(self):
        return self.Cf.shape[0]

    def dual_solve(self, b):
        return sla.cho_solve((self.dual_chol, True), b)

    def correction(self, r):
        """Substructure correction: zero corner values, zero averages, load ``r`` on free dofs."""
        z = solve(self.corner_fact, r).x
        if self.n_averages == 0:
            return z
        mu = self.dual_solve(self.Cf @ z)
        return solve(self.corner_fact, r - self.Cf.T @ mu).x


def _local_average_rows(plan, i, g2l):
    rows = []
    for ri, row in enumerate(plan.average_rows):
        if i in plan.globs[row.glob].sharing:
            dofs = 3 * g2l[np.array(row.nodes)] + row.direction
            rows.append((ri, dofs, row.coefficient))
    return rows


def setup_subdomain(stiffness, plan, dirichlet=None, iface=None):
    """Factorizations, dual matrix, coarse basis and local coarse matrix of one subdomain.

    ``dirichlet`` is ``(local dofs, values)``; by default it is read from the
    mesh. ``iface`` (an InterfaceDofs) enables the interface-fixed
    factorization used by the Schur operator.
    """
    i = stiffness.index
    dec = plan.decomposition
    K = stiffness.K
    n = K.shape[0]
    g2l = dec.global_to_local(i)
    d_dofs = local_dirichlet(dec, i)[0] if dirichlet is None else np.asarray(dirichlet[0], dtype=np.int64)
    timings = {}

    corner_index, _, _ = coarse_numbering(plan)
    my_corners = [int(c) for c in plan.corners if g2l[c] >= 0]
    corner_dofs = np.array([3 * g2l[c] + d for c in my_corners for d in range(3)], dtype=np.int64)
    corner_global = [3 * corner_index[c] + d for c in my_corners for d in range(3)]
    avg = _local_average_rows(plan, i, g2l)
    n_corner_c = 3 * len(plan.corners)
    coarse_global = np.array(corner_global + [n_corner_c + ri for ri, _, _ in avg], dtype=np.int64)

    t0 = time.perf_counter()
    interface_fact, interface_local = None, np.zeros(0, dtype=np.int64)
    if iface is not None:
        interface_local = iface.local[i]
        interface_fact = factor(K, np.union1d(interface_local, d_dofs))
    fixed_c = np.union1d(corner_dofs, d_dofs)
    try:
        corner_fact = factor(K, fixed_c)
    except SingularBlockError as exc:
        raise SingularBlockError(exc.index, exc.pivot, f"subdomain {i}: {exc}") from None
    timings["factorization"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    n_avg = len(avg)
    Cf = sp.csr_matrix(
        (
            np.concatenate([np.full(len(d), c) for _, d, c in avg]) if avg else np.zeros(0),
            (
                np.concatenate([np.full(len(d), k) for k, (_, d, _) in enumerate(avg)]) if avg else np.zeros(0, int),
                np.concatenate([d for _, d, _ in avg]) if avg else np.zeros(0, int),
            ),
        ),
        shape=(n_avg, n),
    )
    if Cf.nnz and np.isin(Cf.indices, fixed_c).any():
        # an average touching a fixed dof loses that part; the row may vanish
        Cf = Cf @ sp.diags(np.where(np.isin(np.arange(n), fixed_c), 0.0, 1.0))
        Cf.eliminate_zeros()
    dual_chol = np.zeros((0, 0))
    if n_avg:
        U = solve_multi(corner_fact, Cf.T.toarray()).x
        dual = Cf @ U
        dual = 0.5 * (dual + dual.T)
        try:
            L = sla.cholesky(dual, lower=True)
        except sla.LinAlgError:
            raise DependentAveragesError(f"subdomain {i}: dual matrix of averages is not positive definite") from None
        scale = np.abs(np.diag(dual)).max()
        if not scale > 0 or (np.diag(L) ** 2 <= DUAL_TOL * scale).any():
            raise DependentAveragesError(f"subdomain {i}: average constraints are linearly dependent")
        dual_chol = L

    n_c = len(coarse_global)
    X2 = np.zeros((len(fixed_c), n_c))
    X2[np.searchsorted(fixed_c, corner_dofs), np.arange(len(corner_dofs))] = 1.0
    zero = np.zeros((n, n_c))
    lam = np.zeros((n_avg, n_c))
    if n_avg:
        x0 = solve_multi(corner_fact, zero, X2).x
        R = np.zeros((n_avg, n_c))
        R[np.arange(n_avg), len(corner_dofs) + np.arange(n_avg)] = 1.0
        lam = sla.cho_solve((dual_chol, True), Cf @ x0 - R)
        rhs = -(Cf.T @ lam)
    else:
        rhs = zero
    res = solve_multi(corner_fact, rhs, X2)
    psi = res.x
    K_C = X2.T @ res.reactions
    if n_avg:
        K_C -= (Cf @ psi).T @ lam
    timings["setup"] = time.perf_counter() - t0

    return SubdomainPreconditioner(
        index=i,
        n=n,
        corner_fact=corner_fact,
        interface_fact=interface_fact,
        interface_local=interface_local,
        coarse_global=coarse_global,
        n_corner_dofs=len(corner_dofs),
        Cf=Cf.tocsr(),
        dual_chol=dual_chol,
        psi=psi,
        K_C=K_C,
        lam=lam,
        timings=timings,
    )


@dataclass(eq=False)
class CoarseProblem:
    n: int
    A_C: sp.csr_matrix
    fact: object
    maps: list
    factor_time: float = 0.0

    def solve(self, r_C):
        if self.n == 0:
            return np.zeros(0)
        return solve(self.fact, r_C).x


def assemble_coarse(locals_, plan):
    """Assemble the subdomain coarse matrices like element matrices and factor the result."""
    _, n_coarse, fixed = coarse_numbering(plan)
    rows, cols, vals = [], [], []
    for loc in locals_:
        g = loc.coarse_global
        rows.append(np.repeat(g, len(g)))
        cols.append(np.tile(g, len(g)))
        vals.append(loc.K_C.ravel())
    if rows:
        rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    A_C = sp.coo_matrix((vals, (rows, cols)), shape=(n_coarse, n_coarse)).tocsr()
    A_C.sum_duplicates()
    t0 = time.perf_counter()
    fact = None
    if n_coarse:
        try:
            fact = factor(A_C, fixed)
        except SingularBlockError as exc:
            raise InsufficientConstraintsError(f"coarse matrix is singular: {exc}") from None
    return CoarseProblem(n_coarse, A_C, fact, [loc.coarse_global for loc in locals_], time.perf_counter() - t0)


@dataclass(frozen=True)
class AveragingOperator:
    """Weights of each subdomain copy of every interface unknown (partition of unity)."""

    size: int
    weights: list
    position: list

    def restrict(self, r2, i):
        """Component of E^T r2 on the interface dofs of subdomain ``i``."""
        return self.weights[i] * r2[self.position[i]]

    def average(self, local_values):
        """E: weighted sum of per-subdomain interface values."""
        v = np.zeros(self.size)
        for w, p, x in zip(self.weights, self.position, local_values):
            np.add.at(v, p, w * x)
        return v


def build_averaging(stiffnesses, decomposition, iface=None):
    """Weights proportional to the diagonal of each subdomain's assembled stiffness."""
    iface = interface_dofs(decomposition) if iface is None else iface
    diags = [st.K.diagonal()[iface.local[st.index]] for st in stiffnesses]
    total = np.zeros(iface.size)
    for st, dg in zip(stiffnesses, diags):
        np.add.at(total, iface.position[st.index], dg)
    if (total <= 0).any():
        bad = int(iface.global_dofs[np.flatnonzero(total <= 0)[0]])
        raise DegenerateDofError(f"interface dof {bad} has a zero diagonal sum")
    weights = [None] * decomposition.n_parts
    for st, dg in zip(stiffnesses, diags):
        weights[st.index] = dg / total[iface.position[st.index]]
    return AveragingOperator(iface.size, weights, list(iface.position))


def apply(locals_, coarse, E, r2, iface, n_jobs=None):
    """Preconditioned residual v2 = E S~^{-1} E^T r2 on the global interface."""
    r2 = np.asarray(r2, dtype=float)

    def local_part(loc):
        r = np.zeros(loc.n)
        r[iface.local[loc.index]] = E.restrict(r2, loc.index)
        return r, loc.correction(r), loc.psi.T @ r

    parts = pmap(local_part, locals_, n_jobs)
    r_C = np.zeros(coarse.n)
    for loc, (_, _, rc) in zip(locals_, parts):
        np.add.at(r_C, loc.coarse_global, rc)
    w_C = coarse.solve(r_C)
    values = []
    for loc, (_, w, _) in zip(locals_, parts):
        w = w + loc.psi @ w_C[loc.coarse_global]
        values.append(w[iface.local[loc.index]])
    return E.average(values)


class BDDCPreconditioner:
    """Callable bundle of the subdomain data, coarse problem and averaging operator."""

    def __init__(self, locals_, coarse, averaging, iface, n_jobs=None):
        self.locals = locals_
        self.coarse = coarse
        self.averaging = averaging
        self.iface = iface
        self.n_jobs = n_jobs

    def __call__(self, r2):
        return apply(self.locals, self.coarse, self.averaging, r2, self.iface, self.n_jobs)

    @classmethod
    def from_plan(cls, stiffnesses, plan, iface=None, n_jobs=None):
        iface = interface_dofs(plan.decomposition) if iface is None else iface
        locals_ = pmap(lambda st: setup_subdomain(st, plan, iface=iface), stiffnesses, n_jobs)
        coarse = assemble_coarse(locals_, plan)
        E = build_averaging(stiffnesses, plan.decomposition, iface)
        return cls(locals_, coarse, E, iface, n_jobs)
