import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from frontbddc.constrained_solver import factor, solve, solve_multi
from frontbddc.exceptions import SingularBlockError
from frontbddc.fem import assemble_subdomain
from frontbddc.mesh import generate_cube
from frontbddc.partition import divide_regular, local_dirichlet

TWO = np.array([[2.0, 1.0], [1.0, 2.0]])


@pytest.fixture(scope="module")
def subdomain():
    mesh = generate_cube(4)
    dec = divide_regular(mesh, (2, 1, 1))
    return dec, [assemble_subdomain(mesh, dec, i) for i in range(2)]


def check_identity(A, fact, f, res):
    """A x = f + [0; r2]: free rows balance, fixed rows give the reactions."""
    Ax = A @ res.x
    tol = 1e-10 * (abs(A).sum(axis=0).max() * np.linalg.norm(res.x) + np.linalg.norm(f))
    assert np.linalg.norm((Ax - f)[fact.free]) <= tol
    assert np.linalg.norm((Ax - f)[fact.fixed] - res.reactions) <= tol


def test_two_by_two():
    fact = factor(TWO, [1])
    np.testing.assert_array_equal(fact.free, [0])
    res = solve(fact, np.array([1.0, 0.0]), np.array([0.0]))
    np.testing.assert_allclose(res.x, [0.5, 0.0], rtol=1e-15)
    np.testing.assert_allclose(res.reactions, [0.5], rtol=1e-15)


def test_two_by_two_nonzero_fixed_value():
    fact = factor(TWO, [1])
    res = solve(fact, np.array([1.0, 3.0]), np.array([2.0]))
    # 2 x1 + 2 = 1  -> x1 = -0.5 ; r = -0.5 + 4 - 3
    np.testing.assert_allclose(res.x, [-0.5, 2.0], rtol=1e-15)
    np.testing.assert_allclose(res.reactions, [0.5], rtol=1e-15)


def test_identity_without_fixed():
    fact = factor(sp.identity(5), [])
    e3 = np.eye(5)[3]
    res = solve(fact, e3)
    np.testing.assert_array_equal(res.x, e3)
    assert res.reactions.shape == (0,)


def test_everything_fixed():
    fact = factor(TWO, [0, 1])
    res = solve(fact, np.array([1.0, 1.0]), np.array([1.0, -1.0]))
    np.testing.assert_array_equal(res.x, [1.0, -1.0])
    np.testing.assert_allclose(res.reactions, TWO @ [1.0, -1.0] - 1.0)


def test_homogeneous(subdomain):
    dec, stiff = subdomain
    s = stiff[1]
    fact = factor(s.K, np.arange(0, s.n_dofs, 7))
    res = solve(fact, np.zeros(s.n_dofs), np.zeros(fact.n_fixed))
    assert not res.x.any() and not res.reactions.any()


def test_floating_without_fixed_is_singular(subdomain):
    _, stiff = subdomain
    with pytest.raises(SingularBlockError):
        factor(stiff[1].K, [])


def test_clamped_subdomain_with_dirichlet_fixed_factors(subdomain):
    dec, stiff = subdomain
    dofs, _ = local_dirichlet(dec, 0)
    fact = factor(stiff[0].K, dofs)
    assert fact.n_free == stiff[0].n_dofs - len(dofs)


def test_singular_pivot_reported_in_original_numbering():
    # dof 2 duplicates dof 0, so the free block is singular but has a positive diagonal
    A = np.array([[1.0, 0.0, 1.0], [0.0, 2.0, 0.0], [1.0, 0.0, 1.0]])
    with pytest.raises(SingularBlockError) as info:
        factor(A, [])
    assert info.value.index in (0, 2, -1)
    factor(A, [2])


def test_zero_diagonal_reported():
    A = np.diag([1.0, 0.0, 3.0])
    with pytest.raises(SingularBlockError) as info:
        factor(A, [])
    assert info.value.index == 1


def test_bad_arguments():
    with pytest.raises(ValueError):
        factor(TWO, [2])
    with pytest.raises(ValueError):
        factor(TWO, [1, 1])
    fact = factor(TWO, [1])
    with pytest.raises(ValueError):
        solve(fact, np.zeros(3))
    with pytest.raises(ValueError):
        solve(fact, np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        solve_multi(fact, np.zeros((2, 2)), np.zeros((1, 3)))


def test_interface_fixed_identity_on_subdomain(subdomain):
    dec, stiff = subdomain
    s = stiff[1]
    g2l = dec.global_to_local(1)
    iface = (3 * g2l[dec.interface_nodes][:, None] + np.arange(3)).ravel()
    fact = factor(s.K, iface)
    rng = np.random.default_rng(3)
    f = rng.standard_normal(s.n_dofs)
    res = solve(fact, f, rng.standard_normal(fact.n_fixed))
    check_identity(s.K, fact, f, res)


def test_linearity(subdomain):
    _, stiff = subdomain
    s = stiff[0]
    fact = factor(s.K, np.arange(0, s.n_dofs, 5))
    rng = np.random.default_rng(4)
    f1, f2 = rng.standard_normal((2, s.n_dofs))
    a, b, c = (solve(fact, f) for f in (f1, f2, f1 + f2))
    for field in ("x", "reactions"):
        lhs = getattr(c, field)
        rhs = getattr(a, field) + getattr(b, field)
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(lhs)


@st.composite
def spd_problems(draw):
    n = draw(st.integers(1, 200))
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    # sparse SPD: random sparse B, A = B^T B + shift
    B = sp.random(n, n, density=min(1.0, 4.0 / n), random_state=rng)
    A = (B.T @ B + sp.identity(n) * draw(st.floats(0.1, 10.0))).toarray()
    mask = rng.random(n) < draw(st.floats(0.0, 0.9))
    fixed = np.flatnonzero(mask)
    f = rng.standard_normal(n)
    x2 = rng.standard_normal(len(fixed))
    return A, fixed, f, x2


@settings(max_examples=40, deadline=None)
@given(spd_problems())
def test_dense_oracle(problem):
    A, fixed, f, x2 = problem
    fact = factor(A, fixed)
    res = solve(fact, f, x2)
    free = fact.free
    x = np.zeros(len(A))
    x[fixed] = x2
    if len(free):
        x[free] = np.linalg.solve(A[np.ix_(free, free)], f[free] - A[np.ix_(free, fixed)] @ x2)
    r = A[fixed] @ x - f[fixed]
    assert np.linalg.norm(res.x - x) <= 1e-10 * max(np.linalg.norm(x), 1e-300)
    assert np.linalg.norm(res.reactions - r) <= 1e-10 * max(np.linalg.norm(r), np.linalg.norm(f), 1e-300)
    check_identity(A, fact, f, res)


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, (6, 2), elements=st.floats(-1e3, 1e3)))
def test_multi_equals_separate_solves(block):
    A = np.array([[4.0, 1, 0, 0, 0, 0], [1, 4, 1, 0, 0, 0], [0, 1, 4, 1, 0, 0],
                  [0, 0, 1, 4, 1, 0], [0, 0, 0, 1, 4, 1], [0, 0, 0, 0, 1, 4]])
    fact = factor(A, [1, 4])
    X2 = block[:2] / 7.0
    multi = solve_multi(fact, block, X2)
    for j in range(2):
        one = solve(fact, block[:, j], X2[:, j])
        assert np.array_equal(multi.x[:, j], one.x)
        assert np.array_equal(multi.reactions[:, j], one.reactions)


def test_multi_equals_separate_on_subdomain(subdomain):
    dec, stiff = subdomain
    s = stiff[1]
    fact = factor(s.K, np.arange(0, s.n_dofs, 4))
    rng = np.random.default_rng(5)
    F = rng.standard_normal((s.n_dofs, 3))
    X2 = rng.standard_normal((fact.n_fixed, 3))
    multi = solve_multi(fact, F, X2)
    for j in range(3):
        one = solve(fact, F[:, j], X2[:, j])
        assert np.array_equal(multi.x[:, j], one.x)
        assert np.array_equal(multi.reactions[:, j], one.reactions)


def test_multi_identity_block():
    A = np.array([[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]])
    fact = factor(A, [2])
    res = solve_multi(fact, np.eye(3)[:, :2])
    np.testing.assert_allclose(res.x[:2], np.linalg.inv(A[:2, :2]), rtol=1e-14)
    np.testing.assert_array_equal(res.x[2], 0.0)
