import numpy as np
import pytest

from frontbddc.bddc import BDDCPreconditioner, interface_dofs
from frontbddc.fem import assemble_global, assemble_subdomain
from frontbddc.krylov import SchurOperator
from frontbddc.mesh import generate_cube
from frontbddc.partition import add_averages, divide_rcb, divide_regular, initial_plan

_ACCEPTANCE = []
# free-form text (measured tables) shown after the criteria lines
ACCEPTANCE_NOTES = []


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    for mark_args in getattr(report, "criterion", ()):
        _ACCEPTANCE.append((mark_args, report.outcome))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    rep.criterion = [m.args for m in item.iter_markers("criterion")]


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion checked by the test")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (number, text), outcome in sorted(_ACCEPTANCE, key=lambda a: (a[0][0], a[0][1])):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  criterion {number}: {text}")
    for note in ACCEPTANCE_NOTES:
        terminalreporter.write_line("")
        for line in note.splitlines():
            terminalreporter.write_line(line)


class Problem:
    """A decomposed cube with everything needed for BDDC and dense cross-checks."""

    def __init__(self, n, partition, averages="none", plan=None):
        self.mesh = generate_cube(n)
        if isinstance(partition, int):
            self.dec = divide_rcb(self.mesh, partition)
        else:
            self.dec = divide_regular(self.mesh, partition)
        self.stiff = [assemble_subdomain(self.mesh, self.dec, i) for i in range(self.dec.n_parts)]
        self.plan = add_averages(initial_plan(self.dec), averages) if plan is None else plan
        self.iface = interface_dofs(self.dec)
        self.P = BDDCPreconditioner.from_plan(self.stiff, self.plan, self.iface)
        self.op = SchurOperator(self.dec, self.iface, [(s, loc.interface_fact) for s, loc in zip(self.stiff, self.P.locals)])

    # dense oracles, independent of the constrained solver
    def dense(self):
        K, f = assemble_global(self.mesh)
        fixed = np.array(sorted(3 * n + d for n, d in self.mesh.dirichlet))
        free = np.setdiff1d(np.arange(self.mesh.n_dofs), fixed)
        return K.toarray(), f, free

    def dense_solution(self):
        K, f, free = self.dense()
        u = np.zeros(self.mesh.n_dofs)
        u[free] = np.linalg.solve(K[np.ix_(free, free)], f[free])
        return u

    def dense_schur(self):
        K, f, free = self.dense()
        G = self.iface.global_dofs
        inner = np.setdiff1d(free, G)
        Kii = K[np.ix_(inner, inner)]
        Kig = K[np.ix_(inner, G)]
        S = K[np.ix_(G, G)] - Kig.T @ np.linalg.solve(Kii, Kig)
        g = f[G] - Kig.T @ np.linalg.solve(Kii, f[inner])
        return S, g


@pytest.fixture(scope="session")
def two_sub():
    return Problem(4, (2, 1, 1))


@pytest.fixture(scope="session")
def two_sub_faces():
    return Problem(4, (2, 1, 1), "faces")


@pytest.fixture(scope="session")
def eight_sub():
    return Problem(4, (2, 2, 2), "edges+faces")


@pytest.fixture(scope="session")
def make_problem():
    return Problem


def rel(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), 1e-300)
