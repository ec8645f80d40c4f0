"""Interface Schur system: products and right-hand side from reactions, PCG, recovery."""
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from ._parallel import pmap
from .constrained_solver import solve
from .exceptions import IndefinitePreconditionerError
from .partition import local_dirichlet

__all__ = [
    "SchurOperator",
    "PcgReport",
    "condensed_rhs",
    "schur_product",
    "pcg",
    "recover_interior",
    "lanczos_condition",
]


@dataclass(eq=False)
class SchurOperator:
    """Per-subdomain factorizations with every interface and Dirichlet dof fixed.

    ``subdomains`` holds ``(stiffness, factorization)`` pairs.
    """

    decomposition: object
    iface: object
    subdomains: list
    n_jobs: int = None
    _layout: list = field(init=False, repr=False)

    def __post_init__(self):
        self._layout = []
        for st, fact in self.subdomains:
            d_dofs, d_vals = local_dirichlet(self.decomposition, st.index)
            g_local = self.iface.local[st.index]
            self._layout.append(
                (
                    np.searchsorted(fact.fixed, g_local),
                    np.searchsorted(fact.fixed, d_dofs),
                    d_vals,
                )
            )

    @property
    def size(self):
        return self.iface.size

    def _fixed_values(self, k, interface_values, with_dirichlet):
        st, fact = self.subdomains[k]
        g_pos, d_pos, d_vals = self._layout[k]
        x2 = np.zeros(fact.n_fixed)
        if interface_values is not None:
            x2[g_pos] = interface_values[self.iface.position[st.index]]
        if with_dirichlet:
            x2[d_pos] = d_vals
        return x2

    def __matmul__(self, p2):
        return schur_product(self, p2)


def schur_product(op, p2):
    """S p2: fix p2 on the interface (zero load) and sum the interface reactions."""
    p2 = np.asarray(p2, dtype=float)

    def local(k):
        st, fact = op.subdomains[k]
        res = solve(fact, np.zeros(fact.n), op._fixed_values(k, p2, False))
        return res.reactions[op._layout[k][0]]

    out = np.zeros(op.size)
    for k, reac in enumerate(pmap(local, range(len(op.subdomains)), op.n_jobs)):
        np.add.at(out, op.iface.position[op.subdomains[k][0].index], reac)
    return out


def condensed_rhs(op, loads=None):
    """g2 = f2 - A21 A11^{-1} f1, as minus the reactions of interior solves with the interface held at zero.

    ``loads`` optionally replaces the subdomain load vectors.
    """
    g2 = np.zeros(op.size)
    for k, (st, fact) in enumerate(op.subdomains):
        f = st.f if loads is None else loads[k]
        res = solve(fact, f, op._fixed_values(k, None, True))
        g_pos = op._layout[k][0]
        np.add.at(g2, op.iface.position[st.index], -res.reactions[g_pos])
    return g2


def recover_interior(op, u2, loads=None):
    """Full displacement from interface values: local solves with u2 and Dirichlet values fixed."""
    mesh = op.decomposition.mesh
    u = np.zeros(mesh.n_dofs)
    for k, (st, fact) in enumerate(op.subdomains):
        f = st.f if loads is None else loads[k]
        res = solve(fact, f, op._fixed_values(k, u2, True))
        u[st.dofs] = res.x
    return u


@dataclass
class PcgReport:
    iterations: int
    residuals: list
    converged: bool
    cond_est: float = None
    alphas: list = field(default_factory=list, repr=False)
    betas: list = field(default_factory=list, repr=False)
    timings: dict = field(default_factory=dict)

    @property
    def final_residual(self):
        return self.residuals[-1] if self.residuals else 0.0


def lanczos_condition(alphas, betas):
    """Ratio of extreme eigenvalues of the Lanczos matrix built from CG coefficients.

    ``alphas`` has k entries, ``betas`` at least k-1. Returns None for k < 2.
    """
    k = len(alphas)
    if k < 2:
        return None
    a = np.asarray(alphas, dtype=float)
    b = np.asarray(betas[: k - 1], dtype=float)
    diag = 1.0 / a
    diag[1:] += b / a[:-1]
    off = np.sqrt(b) / a[:-1]
    ev = sla.eigh_tridiagonal(diag, off, eigvals_only=True)
    return float(ev[-1] / ev[0])


def pcg(op, precond, g2, tol=1e-6, max_iter=500, callback=None):
    """Preconditioned CG from a zero initial guess.

    Stops when ||r||_2 / ||g2||_2 < tol. ``op`` is anything supporting ``op @ p``
    and ``precond`` a callable. ``callback(k, u)`` is called after each update.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    t0 = time.perf_counter()
    g2 = np.asarray(g2, dtype=float)
    u = np.zeros_like(g2)
    gnorm = np.linalg.norm(g2)
    if gnorm == 0.0:
        return u, PcgReport(0, [0.0], True, None, timings={"iterations": time.perf_counter() - t0})

    r = g2.copy()
    residuals = [1.0]
    alphas, betas = [], []
    z = precond(r)
    rz = float(r @ z)
    if rz <= 0:
        raise IndefinitePreconditionerError(f"r^T M r = {rz} at iteration 0")
    p = z.copy()
    converged = False
    it = 0
    while it < max_iter:
        q = op @ p
        pq = float(p @ q)
        if pq <= 0:
            raise IndefinitePreconditionerError(f"p^T S p = {pq} at iteration {it}")
        alpha = rz / pq
        u += alpha * p
        r -= alpha * q
        it += 1
        alphas.append(alpha)
        residuals.append(float(np.linalg.norm(r) / gnorm))
        if callback is not None:
            callback(it, u)
        if residuals[-1] < tol:
            converged = True
            break
        z = precond(r)
        rz_new = float(r @ z)
        if rz_new <= 0:
            raise IndefinitePreconditionerError(f"r^T M r = {rz_new} at iteration {it}")
        beta = rz_new / rz
        betas.append(beta)
        rz = rz_new
        p = z + beta * p
    report = PcgReport(
        iterations=it,
        residuals=residuals,
        converged=converged,
        cond_est=lanczos_condition(alphas, betas),
        alphas=alphas,
        betas=betas,
        timings={"iterations": time.perf_counter() - t0},
    )
    return u, report
