"""Estimator-style front end: ``fit`` runs the BDDC setup, ``predict`` solves for a load."""
import time

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._parallel import pmap
from .bddc import BDDCPreconditioner, interface_dofs
from .fem import assemble_subdomain
from .krylov import SchurOperator, condensed_rhs, pcg, recover_interior
from .partition import add_averages, divide_rcb, divide_regular, enrich_corners, initial_plan
from .validation import check_coarse, check_decomposition, check_load, check_mesh, check_partition


class BDDCSolver(BaseEstimator):
    """BDDC-preconditioned interface CG solver for a hexahedral elasticity mesh.

    Parameters
    ----------
    coarse : str
        ``corners``, ``corners+edges``, ``corners+faces`` or ``corners+edges+faces``.
    partition : tuple of 3 ints or int
        Regular block counts per axis, or a subdomain count for recursive
        coordinate bisection. Ignored when ``fit`` receives a decomposition.
    extra_corners, seed : int
        Randomly chosen interface nodes promoted to corners.
    tol, max_iter :
        PCG stopping rule on ``||r|| / ||g||``.
    n_jobs : int or None
        Threads for the per-subdomain work; None runs sequentially.

    Attributes
    ----------
    decomposition_, plan_, stiffness_, preconditioner_, schur_ :
        Setup products.
    report_ : PcgReport
        Report of the most recent ``predict``.
    timings_ : dict
        Seconds spent in ``assembly``, ``factorization``, ``setup``.
    """

    def __init__(
        self,
        coarse="corners+edges+faces",
        partition=(2, 2, 2),
        extra_corners=0,
        seed=0,
        tol=1e-6,
        max_iter=500,
        n_jobs=None,
    ):
        self.coarse = coarse
        self.partition = partition
        self.extra_corners = extra_corners
        self.seed = seed
        self.tol = tol
        self.max_iter = max_iter
        self.n_jobs = n_jobs

    def fit(self, mesh, decomposition=None):
        mesh = check_mesh(mesh)
        which = check_coarse(self.coarse)
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        if self.max_iter < 0 or self.extra_corners < 0:
            raise ValueError("max_iter and extra_corners must be nonnegative")
        if decomposition is None:
            part = check_partition(self.partition)
            decomposition = divide_rcb(mesh, part) if isinstance(part, int) else divide_regular(mesh, part)
        dec = check_decomposition(decomposition, mesh)

        timings = {}
        t0 = time.perf_counter()
        self.stiffness_ = pmap(lambda i: assemble_subdomain(mesh, dec, i), range(dec.n_parts), self.n_jobs)
        timings["assembly"] = time.perf_counter() - t0

        plan = initial_plan(dec)
        plan = enrich_corners(plan, dec, self.extra_corners, self.seed)
        self.plan_ = add_averages(plan, which)

        iface = interface_dofs(dec)
        P = BDDCPreconditioner.from_plan(self.stiffness_, self.plan_, iface, self.n_jobs)
        timings["factorization"] = sum(loc.timings["factorization"] for loc in P.locals) + P.coarse.factor_time
        timings["setup"] = sum(loc.timings["setup"] for loc in P.locals)
        self.preconditioner_ = P
        self.schur_ = SchurOperator(
            dec, iface, [(st, loc.interface_fact) for st, loc in zip(self.stiffness_, P.locals)], self.n_jobs
        )
        self.decomposition_ = dec
        self.mesh_ = mesh
        self.timings_ = timings
        return self

    def _local_loads(self, f):
        owner = self.decomposition_.node_owner
        loads = []
        for st in self.stiffness_:
            fl = f[st.dofs].copy()
            fl[np.repeat(owner[st.nodes] != st.index, 3)] = 0.0
            loads.append(fl)
        return loads

    def predict(self, f=None):
        """Displacement for the global load vector ``f`` (default: the mesh loads)."""
        check_is_fitted(self, "preconditioner_")
        loads = None
        if f is not None:
            loads = self._local_loads(check_load(f, self.mesh_.n_dofs))
        g2 = condensed_rhs(self.schur_, loads)
        u2, report = pcg(self.schur_, self.preconditioner_, g2, self.tol, self.max_iter)
        self.report_ = report
        return recover_interior(self.schur_, u2, loads)

    @property
    def n_iter_(self):
        check_is_fitted(self, "report_")
        return self.report_.iterations
