import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from mhdtrace.sparse import (
    DimensionError,
    SingularMatrixError,
    ZeroPivotError,
    check_csr,
    csr_from_triplets,
    csr_to_triplets,
    dense_lu_solve,
    ilu0_apply,
    ilu0_factor,
    read_matrix_market,
    sparse_lu_factor,
    spmv,
    transpose,
    with_diagonal,
    write_matrix_market,
)

from oracles import doolittle, laplace_1d, laplace_2d

TRIDIAG = np.array([[4.0, -1, 0], [-1, 4, -1], [0, -1, 4]])


def csr(a):
    A = sp.csr_matrix(np.asarray(a, dtype=float))
    A.sort_indices()
    return A


def random_csr(rng, n, density=0.1, diag=True):
    A = sp.random(n, n, density=density, random_state=rng, format="csr")
    if diag:
        A = A + sp.diags(n + rng.random(n))
    A = sp.csr_matrix(A)
    A.sort_indices()
    return A


# ---------------------------------------------------------------- spmv / transpose

def test_spmv_identity():
    assert np.array_equal(spmv(csr(np.eye(2)), [3, -1]), [3, -1])


def test_spmv_small():
    assert np.allclose(spmv(csr([[4, -1], [-1, 4]]), [1, 1]), [3, 3], atol=0)


def test_spmv_random_matches_dense():
    rng = np.random.default_rng(1)
    A = random_csr(rng, 50, 0.1, diag=False)
    x = rng.standard_normal(50)
    assert np.max(np.abs(spmv(A, x) - A.toarray() @ x)) <= 1e-13


def test_spmv_dimension_error():
    with pytest.raises(DimensionError):
        spmv(csr(np.eye(3)), np.ones(2))


def test_transpose_examples():
    assert np.array_equal(transpose(csr(np.eye(3))).toarray(), np.eye(3))
    T = transpose(csr([[1, 2, 3]]))
    assert T.shape == (3, 1)
    assert np.array_equal(T.toarray().ravel(), [1, 2, 3])
    check_csr(T)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 10_000))
def test_transpose_involution(m, n, seed):
    rng = np.random.default_rng(seed)
    A = sp.random(m, n, density=0.2, random_state=rng, format="csr")
    A.sort_indices()
    T = transpose(A)
    check_csr(T)
    TT = transpose(T)
    assert np.array_equal(TT.indptr, A.indptr)
    assert np.array_equal(TT.indices, A.indices)
    assert np.array_equal(TT.data, A.data)
    x = rng.standard_normal(n)
    assert np.array_equal(TT @ x, A @ x)
    assert np.array_equal(T.toarray(), A.toarray().T)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5), st.floats(-10, 10)), min_size=1, max_size=40))
def test_triplet_roundtrip_sums_duplicates(trip):
    r, c, v = map(np.array, zip(*trip))
    A = csr_from_triplets(r, c, v, (6, 6))
    check_csr(A)
    ref = np.zeros((6, 6))
    np.add.at(ref, (r, c), v)
    rr, cc, vv = csr_to_triplets(A)
    back = np.zeros((6, 6))
    back[rr, cc] = vv
    assert np.allclose(back, ref, atol=1e-12)


def test_with_diagonal_keeps_explicit_zeros():
    A = csr([[0, 1], [1, 0]])
    B = with_diagonal(A)
    assert B.nnz == 4
    assert np.array_equal(B.toarray(), A.toarray())


# ---------------------------------------------------------------- ILU(0)

def test_ilu0_diagonal():
    F = ilu0_factor(csr(np.diag([2.0, 3.0, 5.0])))
    assert np.array_equal(F.lower().toarray(), np.eye(3))
    assert np.array_equal(F.upper().toarray(), np.diag([2.0, 3.0, 5.0]))


def test_ilu0_tridiagonal_equals_lu():
    F = ilu0_factor(csr(TRIDIAG))
    L, U = doolittle(TRIDIAG)
    assert np.max(np.abs(F.lower().toarray() - L)) <= 1e-12
    assert np.max(np.abs(F.upper().toarray() - U)) <= 1e-12
    x = ilu0_apply(F, [3.0, 2.0, 3.0])
    assert np.max(np.abs(x - np.linalg.solve(TRIDIAG, [3.0, 2.0, 3.0]))) <= 1e-12


def test_ilu0_apply_trivial():
    assert np.array_equal(ilu0_apply(ilu0_factor(csr(np.eye(2))), [1.0, 2.0]), [1.0, 2.0])
    assert np.allclose(ilu0_apply(ilu0_factor(csr(np.diag([2.0, 4.0]))), [2.0, 4.0]), [1, 1], atol=0)


def test_ilu0_laplacian_pattern_residual():
    A = csr(laplace_2d(8))
    F = ilu0_factor(A)
    R = A.toarray() - F.lower().toarray() @ F.upper().toarray()
    pat = A.toarray() != 0
    assert np.max(np.abs(R[pat])) <= 1e-12
    assert np.max(np.abs(R[~pat])) > 1e-3


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 30), st.integers(0, 10_000))
def test_ilu0_residual_vanishes_on_pattern(n, seed):
    rng = np.random.default_rng(seed)
    A = random_csr(rng, n, 0.3)
    F = ilu0_factor(A)
    R = A.toarray() - F.lower().toarray() @ F.upper().toarray()
    pat = A.toarray() != 0
    assert np.max(np.abs(R[pat]), initial=0.0) <= 1e-10 * np.abs(A).max()


def test_ilu0_zero_pivot_reports_row():
    A = csr([[1.0, 1.0, 0], [1.0, 1.0, 0], [0, 0, 1.0]])
    with pytest.raises(ZeroPivotError) as err:
        ilu0_factor(A)
    assert err.value.row == 1


def test_ilu0_dimension_error():
    F = ilu0_factor(csr(np.eye(3)))
    with pytest.raises(DimensionError):
        ilu0_apply(F, np.ones(4))


# ---------------------------------------------------------------- sparse and dense LU

def test_sparse_lu_identity():
    F = sparse_lu_factor(csr(np.eye(4)))
    assert np.array_equal(F.solve(np.arange(4.0)), np.arange(4.0))


def test_sparse_lu_laplacian_vs_dense():
    A = laplace_1d(10)
    b = np.arange(1.0, 11.0)
    x = sparse_lu_factor(csr(A)).solve(b)
    L, U = doolittle(A)
    ref = np.linalg.solve(U, np.linalg.solve(L, b))
    assert np.max(np.abs(x - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_sparse_lu_singular():
    with pytest.raises(SingularMatrixError):
        sparse_lu_factor(csr(np.ones((2, 2))))


def test_sparse_lu_factors_reproduce_matrix():
    rng = np.random.default_rng(3)
    A = random_csr(rng, 60, 0.1)
    F = sparse_lu_factor(A)
    n = A.shape[0]
    Pr = sp.csr_matrix((np.ones(n), (F.perm_r, np.arange(n))))
    Pc = sp.csr_matrix((np.ones(n), (np.arange(n), F.perm_c)))
    v = rng.standard_normal(n)
    lhs = Pr @ A @ Pc @ v
    rhs = F.L @ (F.U @ v)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(lhs)


def test_sparse_lu_random_systems():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(5, 501))
        A = random_csr(rng, n, min(1.0, 5.0 / n))
        b = rng.standard_normal(n)
        x = sparse_lu_factor(A).solve(b)
        assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_dense_lu_examples():
    B = np.arange(6.0).reshape(3, 2)
    assert np.array_equal(dense_lu_solve(np.eye(3), B), B)
    assert np.allclose(dense_lu_solve(np.diag([2.0, 4.0]), np.eye(2)), np.diag([0.5, 0.25]), atol=0)
    rng = np.random.default_rng(0)
    A = rng.standard_normal((20, 20))
    B = rng.standard_normal((20, 3))
    X = dense_lu_solve(A, B)
    assert np.linalg.norm(A @ X - B) <= 1e-11 * np.linalg.norm(B)


def test_dense_lu_singular():
    with pytest.raises(SingularMatrixError):
        dense_lu_solve(np.ones((3, 3)), np.ones(3))


def test_matrix_market_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    A = random_csr(rng, 12, 0.3)
    p = tmp_path / "a.mtx"
    write_matrix_market(p, A)
    assert "coordinate real general" in p.read_text().splitlines()[0]
    B = read_matrix_market(p)
    assert np.allclose(B.toarray(), A.toarray(), rtol=1e-15, atol=0)
