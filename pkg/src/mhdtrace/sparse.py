"""Sparse and dense linear-algebra kernels.

Assembled operators are held as canonical ``scipy.sparse.csr_matrix``
objects (sorted, duplicate-free column indices). ILU(0) is implemented
here with numba kernels; the fill-in sparse LU is SuperLU via
``scipy.sparse.linalg.splu`` (COLAMD column ordering, partial pivoting).
"""
from __future__ import annotations

from dataclasses import dataclass
import warnings

import numba
import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "DimensionError",
    "ZeroPivotError",
    "SingularMatrixError",
    "csr_from_triplets",
    "csr_to_triplets",
    "check_csr",
    "with_diagonal",
    "spmv",
    "transpose",
    "Ilu0Factors",
    "ilu0_factor",
    "ilu0_apply",
    "SparseLuFactors",
    "sparse_lu_factor",
    "lu_solve",
    "dense_lu_solve",
    "read_matrix_market",
    "write_matrix_market",
]


class DimensionError(ValueError):
    pass


class ZeroPivotError(ArithmeticError):
    def __init__(self, row, value):
        super().__init__(f"zero pivot in row {row} (|pivot| = {abs(value):.3e})")
        self.row = row
        self.value = value


class SingularMatrixError(ArithmeticError):
    pass


def csr_from_triplets(rows, cols, vals, shape) -> sp.csr_matrix:
    """Build a canonical CSR matrix; duplicate entries are summed."""
    A = sp.coo_matrix(
        (np.asarray(vals, dtype=float), (np.asarray(rows), np.asarray(cols))), shape=shape
    ).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def csr_to_triplets(A):
    A = sp.csr_matrix(A)
    rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
    return rows, A.indices.copy(), A.data.copy()


def check_csr(A) -> None:
    """Raise ``ValueError`` if ``A`` violates the canonical CSR invariants."""
    ptr = A.indptr
    if ptr[0] != 0 or ptr[-1] != len(A.data) or np.any(np.diff(ptr) < 0):
        raise ValueError("malformed row offsets")
    if len(A.indices) != len(A.data):
        raise ValueError("column index / value length mismatch")
    for i in range(A.shape[0]):
        cols = A.indices[ptr[i]:ptr[i + 1]]
        if np.any(np.diff(cols) <= 0):
            raise ValueError(f"row {i}: column indices not strictly increasing")


def with_diagonal(A) -> sp.csr_matrix:
    """Return a copy of square ``A`` whose pattern contains every diagonal entry."""
    n = A.shape[0]
    C = sp.coo_matrix(A)
    d = np.arange(n)
    rows = np.concatenate([C.row, d])
    cols = np.concatenate([C.col, d])
    vals = np.concatenate([C.data, np.zeros(n)])
    # coo -> csr sums duplicates and keeps explicit zeros
    A = sp.csr_matrix((vals, (rows, cols)), shape=A.shape)
    A.sum_duplicates()
    A.sort_indices()
    return A


def _as_csr(A):
    if not sp.isspmatrix_csr(A):
        A = sp.csr_matrix(A)
    if not A.has_sorted_indices:
        A = A.copy()
        A.sort_indices()
    return A


def spmv(A, x):
    x = np.asarray(x, dtype=float)
    if x.shape[0] != A.shape[1]:
        raise DimensionError(f"matrix has {A.shape[1]} columns, vector has length {x.shape[0]}")
    return A @ x


def transpose(A) -> sp.csr_matrix:
    At = sp.csr_matrix(A.T)
    At.sort_indices()
    return At


# ---------------------------------------------------------------- ILU(0)

@numba.njit(cache=True)
def _ilu0_kernel(n, indptr, indices, data, diag_ptr, tol):
    iw = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        start, end = indptr[i], indptr[i + 1]
        for jj in range(start, end):
            iw[indices[jj]] = jj
        for kk in range(start, end):
            k = indices[kk]
            if k >= i:
                break
            pivot = data[diag_ptr[k]]
            lik = data[kk] / pivot
            data[kk] = lik
            for jj in range(diag_ptr[k] + 1, indptr[k + 1]):
                pos = iw[indices[jj]]
                if pos != -1:
                    data[pos] -= lik * data[jj]
        for jj in range(start, end):
            iw[indices[jj]] = -1
        if abs(data[diag_ptr[i]]) <= tol:
            return i
    return -1


@numba.njit(cache=True)
def _ilu0_solve_kernel(n, indptr, indices, data, diag_ptr, r):
    x = r.copy()
    for i in range(n):
        s = x[i]
        for jj in range(indptr[i], diag_ptr[i]):
            s -= data[jj] * x[indices[jj]]
        x[i] = s
    for i in range(n - 1, -1, -1):
        s = x[i]
        for jj in range(diag_ptr[i] + 1, indptr[i + 1]):
            s -= data[jj] * x[indices[jj]]
        x[i] = s / data[diag_ptr[i]]
    return x


@dataclass(frozen=True)
class Ilu0Factors:
    """Combined unit-lower L and upper U on the pattern of the source matrix."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    diag_ptr: np.ndarray

    @property
    def n(self):
        return len(self.indptr) - 1

    def lower(self) -> sp.csr_matrix:
        A = sp.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))
        return sp.csr_matrix(sp.tril(A, -1) + sp.identity(self.n))

    def upper(self) -> sp.csr_matrix:
        A = sp.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))
        return sp.csr_matrix(sp.triu(A))

    def solve(self, r):
        return ilu0_apply(self, r)


def ilu0_factor(A, pivot_tol: float = 1e-14) -> Ilu0Factors:
    """IKJ zero-fill incomplete LU.

    A pivot is rejected when its magnitude drops below ``pivot_tol`` times the
    largest diagonal magnitude of ``A``.
    """
    A = _as_csr(A)
    n, m = A.shape
    if n != m:
        raise DimensionError("ILU(0) needs a square matrix")
    indptr = A.indptr.astype(np.int64)
    indices = A.indices.astype(np.int64)
    data = A.data.astype(float).copy()
    rows = np.repeat(np.arange(n), np.diff(indptr))
    on_diag = np.flatnonzero(rows == indices)
    if len(on_diag) != n:
        missing = np.setdiff1d(np.arange(n), rows[on_diag])
        raise ValueError(f"diagonal entry missing from pattern in row {missing[0]}")
    diag_ptr = on_diag.astype(np.int64)
    scale = np.max(np.abs(data[diag_ptr])) if n else 0.0
    bad = _ilu0_kernel(n, indptr, indices, data, diag_ptr, pivot_tol * scale)
    if bad >= 0:
        raise ZeroPivotError(int(bad), data[diag_ptr[bad]])
    return Ilu0Factors(indptr, indices, data, diag_ptr)


def ilu0_apply(F: Ilu0Factors, r):
    r = np.asarray(r, dtype=float)
    if r.shape[0] != F.n:
        raise DimensionError(f"factor has size {F.n}, vector has length {r.shape[0]}")
    return _ilu0_solve_kernel(F.n, F.indptr, F.indices, F.data, F.diag_ptr, r)


# ---------------------------------------------------------------- sparse LU

class SparseLuFactors:
    """P_r A P_c = L U with fill, from SuperLU.

    ``perm_r`` is the row permutation, ``perm_c`` the fill-reducing column
    ordering (COLAMD).
    """

    def __init__(self, lu, shape):
        self._lu = lu
        self.shape = shape

    @property
    def L(self) -> sp.csr_matrix:
        return sp.csr_matrix(self._lu.L)

    @property
    def U(self) -> sp.csr_matrix:
        return sp.csr_matrix(self._lu.U)

    @property
    def perm_r(self):
        return self._lu.perm_r

    @property
    def perm_c(self):
        return self._lu.perm_c

    @property
    def nnz(self):
        return self._lu.L.nnz + self._lu.U.nnz

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.shape[0]:
            raise DimensionError(f"factor has size {self.shape[0]}, rhs has length {b.shape[0]}")
        return self._lu.solve(b)


def sparse_lu_factor(A, singular_tol: float = 1e-14) -> SparseLuFactors:
    A = sp.csc_matrix(A)
    n, m = A.shape
    if n != m:
        raise DimensionError("sparse LU needs a square matrix")
    amax = np.max(np.abs(A.data)) if A.nnz else 0.0
    if amax == 0.0:
        raise SingularMatrixError("zero matrix")
    try:
        lu = spla.splu(A, permc_spec="COLAMD", diag_pivot_thresh=1.0)
    except RuntimeError as exc:
        raise SingularMatrixError(str(exc)) from exc
    udiag = np.abs(lu.U.diagonal())
    if udiag.min() < singular_tol * amax:
        raise SingularMatrixError(
            f"pivot {udiag.min():.3e} below {singular_tol:g}*max|A| = {singular_tol * amax:.3e}"
        )
    return SparseLuFactors(lu, A.shape)


def lu_solve(F: SparseLuFactors, b):
    return F.solve(b)


def dense_lu_solve(A, B):
    """Solve A X = B with partial-pivoting LU.

    ``A`` may be a stack of matrices, shape (..., n, n); ``B`` is (..., n, k)
    or (..., n).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape[-1] != A.shape[-2]:
        raise DimensionError("dense LU needs square matrices")
    if A.ndim == 2:
        with warnings.catch_warnings():
            # singularity is reported below as SingularMatrixError
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
        d = np.abs(np.diag(lu))
        if d.min() <= 1e-14 * max(np.abs(A).max(), 1e-300):
            raise SingularMatrixError("dense matrix is numerically singular")
        return scipy.linalg.lu_solve((lu, piv), B)
    try:
        return np.linalg.solve(A, B)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(str(exc)) from exc


# ---------------------------------------------------------------- I/O

def read_matrix_market(path) -> sp.csr_matrix:
    A = sp.csr_matrix(scipy.io.mmread(str(path)))
    A.sum_duplicates()
    A.sort_indices()
    return A


def write_matrix_market(path, A, comment: str = "") -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment, field="real", symmetry="general")
