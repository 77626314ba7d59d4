import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from mhdtrace.krylov import (
    IterationHistory,
    KrylovBreakdown,
    Preconditioner,
    fgmres,
    gmres,
    write_history_csv,
)

from oracles import dense_gmres_iterate, laplace_1d


class InnerGmres(Preconditioner):
    """A few unpreconditioned GMRES steps on A itself; nonlinear in r."""

    variable = True

    def __init__(self, A, steps=3):
        self.A, self.steps = A, steps

    def apply(self, r):
        x, _ = gmres(self.A, r, None, tol=0.0, maxit=self.steps)
        return x


def test_identity_one_iteration():
    b = np.array([1.0, -2.0, 0.5])
    for solver in (gmres, fgmres):
        x, h = solver(np.eye(3), b)
        assert h.converged and h.iterations == 1
        assert np.allclose(x, b, atol=1e-15)


def test_diagonal_three_iterations():
    A = np.diag([1.0, 2.0, 3.0])
    x, h = gmres(A, np.ones(3), tol=1e-12)
    assert h.converged and h.iterations <= 3
    assert np.allclose(x, np.linalg.solve(A, np.ones(3)), atol=1e-12)


def test_zero_rhs_returns_zero():
    x, h = gmres(np.eye(4), np.zeros(4))
    assert h.converged and h.iterations == 0 and not np.any(x)


def test_matches_least_squares_oracle():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((15, 15)) + 5 * np.eye(15)
    b = rng.standard_normal(15)
    for k in (1, 3, 6):
        x, _ = gmres(A, b, tol=0.0, maxit=k)
        assert np.allclose(x, dense_gmres_iterate(A, b, k), atol=1e-10)


def test_gmres_fgmres_equivalence_fixed_preconditioner():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((30, 30)) + 6 * np.eye(30)
    b = rng.standard_normal(30)
    Minv = np.linalg.inv(np.diag(np.diag(A)) + np.tril(A, -1))
    for k in (1, 5, 12, 25):
        x1, h1 = gmres(A, b, Minv, tol=0.0, maxit=k)
        x2, h2 = fgmres(A, b, Minv, tol=0.0, maxit=k)
        assert np.max(np.abs(x1 - x2)) <= 1e-12 * max(1.0, np.max(np.abs(x1)))
        assert np.allclose(h1.residuals, h2.residuals, rtol=1e-10, atol=1e-14)


def test_fgmres_variable_inner_gmres():
    A = laplace_1d(64)
    b = np.ones(64)
    _, h_plain = gmres(A, b, tol=1e-8, maxit=200)
    x, h = fgmres(A, b, InnerGmres(A, 3), tol=1e-8, maxit=200)
    assert h.converged
    assert h.iterations <= h_plain.iterations
    assert np.linalg.norm(b - A @ x) <= 1e-7 * np.linalg.norm(b)


def test_gmres_rejects_variable_preconditioner():
    with pytest.raises(ValueError):
        gmres(np.eye(3), np.ones(3), InnerGmres(np.eye(3)))


def test_absolute_tolerance_mode():
    A = laplace_1d(20)
    b = 1e4 * np.ones(20)
    x, h = gmres(A, b, tol=1e-3, tol_is_relative=False, maxit=100)
    assert h.converged
    assert np.linalg.norm(b - A @ x) <= 1e-3 * (1 + 1e-6)


def test_maxit_returns_best_iterate_unconverged():
    A = laplace_1d(50)
    x, h = gmres(A, np.ones(50), tol=1e-14, maxit=5)
    assert not h.converged and h.iterations == 5
    assert np.isclose(np.linalg.norm(np.ones(50) - A @ x) / np.sqrt(50), h.final_residual, rtol=1e-8)


def test_nan_breakdown():
    with pytest.raises(KrylovBreakdown):
        gmres(lambda v: np.full_like(v, np.nan), np.ones(3))


def test_sparse_operator_and_x0():
    A = sp.csr_matrix(laplace_1d(30))
    b = np.arange(30.0)
    x_ref = np.linalg.solve(A.toarray(), b)
    x, h = gmres(A, b, tol=1e-12, maxit=60, x0=x_ref + 1e-3)
    assert h.converged and np.allclose(x, x_ref, atol=1e-9)


def test_monotone_residuals_100_random_systems():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(5, 40))
        A = rng.standard_normal((n, n)) + rng.uniform(0, 4) * np.eye(n)
        b = rng.standard_normal(n)
        for solver in (gmres, fgmres):
            _, h = solver(A, b, tol=1e-10, maxit=n)
            r = np.array(h.residuals)
            assert np.all(np.diff(r) <= 1e-14 * r[0])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.integers(0, 10_000))
def test_finite_termination_and_true_residual(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) + n ** 0.5 * np.eye(n)
    b = rng.standard_normal(n)
    x, h = gmres(A, b, tol=1e-12, maxit=n)
    assert h.converged and h.iterations <= n
    true = np.linalg.norm(b - A @ x) / np.linalg.norm(b)
    assert abs(true - h.final_residual) <= 1e-8 + 1e-8 * true


def test_history_csv(tmp_path):
    p = tmp_path / "h.csv"
    write_history_csv(p, {"s1": IterationHistory([1.0, 0.5, 0.1], True)})
    lines = p.read_text().splitlines()
    assert lines[0] == "solve_id,iter,relres"
    assert lines[1:] == ["s1,0,1.0", "s1,1,0.5", "s1,2,0.1"]
