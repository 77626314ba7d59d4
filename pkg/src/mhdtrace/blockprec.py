"""Saddle-point regrouping, BFBT Schur approximation and block preconditioners.

The condensed trace system is reordered as

    [ F  -B^T ] [ u ]   [ r_u ]
    [ B   0   ] [ p ] = [ r_p ]

with ``u`` the nodal unknowns (velocity trace, tangential magnetic trace,
Lagrange-multiplier trace, interleaved per node) and ``p`` the per-element
edge-average pressure. The right preconditioner is the upper block
triangle of the exact inverse with ``F^{-1}`` and ``S^{-1}`` replaced by
approximations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .amg import AmgConfig, AmgPreconditioner, NodalBlockLayout, SmootherConfig, build_hierarchy
from .krylov import Preconditioner, as_preconditioner
from .sparse import (
    DimensionError,
    SingularMatrixError,
    ilu0_apply,
    ilu0_factor,
    sparse_lu_factor,
    with_diagonal,
)

__all__ = [
    "PRECONDITIONERS",
    "SaddleSystem",
    "split_saddle",
    "saddle_from_matrix",
    "BfbtSchur",
    "bfbt_apply",
    "ExactSchurInverse",
    "DenseInverse",
    "BlockPreconditioner",
    "block_precond_apply",
    "Ilu0Richardson",
    "one_level_ilu0_baseline",
    "make_block_preconditioner",
]

PRECONDITIONERS = ("dd-ilu0", "bfbt-amg-ilu0", "bfbt-amg-gmres", "ideal")

# dof block ids used by the trace layout
BLOCK_U, BLOCK_RHO, BLOCK_BT, BLOCK_R = 0, 1, 2, 3


@dataclass
class SaddleSystem:
    F: sp.csr_matrix
    B: sp.csr_matrix
    rhs_u: np.ndarray
    rhs_p: np.ndarray
    layout: NodalBlockLayout
    perm: np.ndarray          # saddle position -> original position
    Bt_neg: sp.csr_matrix | None = None

    @property
    def n_u(self):
        return self.F.shape[0]

    @property
    def n_p(self):
        return self.B.shape[0]

    @property
    def rhs(self):
        return np.concatenate([self.rhs_u, self.rhs_p])

    def matrix(self) -> sp.csr_matrix:
        G = self.Bt_neg if self.Bt_neg is not None else -self.B.T
        K = sp.bmat([[self.F, G], [self.B, None]], format="csr")
        K.sort_indices()
        return K

    def to_saddle(self, x):
        return np.asarray(x)[self.perm]

    def from_saddle(self, y):
        x = np.empty_like(y)
        x[self.perm] = y
        return x


def split_saddle(T) -> SaddleSystem:
    """Reorder a trace system from (U, rho, Bt, R) blocks into nodal-block saddle form.

    ``T`` needs ``matrix``, ``rhs`` and per-dof arrays ``dof_block``,
    ``dof_node`` and ``dof_field``.
    """
    K = sp.csr_matrix(T.matrix)
    blk = np.asarray(T.dof_block)
    if K.shape[0] != K.shape[1] or K.shape[0] != len(blk) or len(T.rhs) != len(blk):
        raise DimensionError("trace system blocks have inconsistent dimensions")
    is_p = blk == BLOCK_RHO
    u_idx = np.flatnonzero(~is_p)
    p_idx = np.flatnonzero(is_p)
    node = np.asarray(T.dof_node)[u_idx]
    fld = np.asarray(T.dof_field)[u_idx]
    order = np.lexsort((fld, node))
    u_idx = u_idx[order]
    node, fld = node[order], fld[order]
    _, counts = np.unique(node, return_counts=True)
    layout = NodalBlockLayout(np.concatenate([[0], np.cumsum(counts)]), fld)
    perm = np.concatenate([u_idx, p_idx])
    Kp = K[perm][:, perm].tocsr()
    nu = len(u_idx)
    F = Kp[:nu, :nu].tocsr()
    B = Kp[nu:, :nu].tocsr()
    G = Kp[:nu, nu:].tocsr()
    C = Kp[nu:, nu:]
    if C.nnz and np.max(np.abs(C.data)) > 0.0:
        raise ValueError("pressure-pressure block is not zero")
    for M in (F, B, G):
        M.sort_indices()
    rhs = np.asarray(T.rhs)[perm]
    return SaddleSystem(F, B, rhs[:nu], rhs[nu:], layout, perm, G)


def saddle_from_matrix(K, rhs, n_u, dofs_per_node=1) -> SaddleSystem:
    """Saddle system from an already-ordered ``[[F, -B^T], [B, 0]]`` matrix."""
    K = sp.csr_matrix(K)
    if n_u % dofs_per_node:
        raise DimensionError("n_u is not a multiple of dofs_per_node")
    F = K[:n_u, :n_u].tocsr()
    B = K[n_u:, :n_u].tocsr()
    G = K[:n_u, n_u:].tocsr()
    layout = NodalBlockLayout.uniform(n_u // dofs_per_node, dofs_per_node)
    rhs = np.asarray(rhs, dtype=float)
    return SaddleSystem(F, B, rhs[:n_u], rhs[n_u:], layout, np.arange(K.shape[0]), G)


# ---------------------------------------------------------------- Schur approximations

class BfbtSchur(Preconditioner):
    """``(B B^T)^{-1} B F B^T (B B^T)^{-1}`` with a sparse LU of ``B B^T``.

    When ``B B^T`` carries the constant null space (enclosed flows), the
    first pressure unknown is pinned: its row and column are replaced by the
    identity and the corresponding right-hand-side entry is zeroed.
    """

    def __init__(self, F, B, pin="auto"):
        self.F = sp.csr_matrix(F)
        self.B = sp.csr_matrix(B)
        self.Bt = sp.csr_matrix(self.B.T)
        BBt = sp.csr_matrix(self.B @ self.Bt)
        if pin == "auto":
            ones = np.ones(BBt.shape[0])
            scale = max(abs(BBt).sum(axis=1).max(), 1e-300)
            pin = bool(np.linalg.norm(BBt @ ones, np.inf) <= 1e-10 * scale)
        self.pinned = bool(pin)
        if self.pinned:
            BBt = BBt.tolil()
            BBt[0, :] = 0.0
            BBt[:, 0] = 0.0
            BBt[0, 0] = 1.0
            BBt = BBt.tocsr()
        self.BBt = BBt
        try:
            self.lu = sparse_lu_factor(BBt)
        except SingularMatrixError as exc:
            raise SingularMatrixError(f"B B^T is singular; enable pinning ({exc})") from exc

    def _solve(self, r):
        if self.pinned:
            r = np.array(r, dtype=float, copy=True)
            r[0] = 0.0
        return self.lu.solve(r)

    def apply(self, r):
        if len(r) != self.B.shape[0]:
            raise DimensionError("pressure residual has the wrong length")
        y = self._solve(r)
        y = self.Bt @ y
        y = self.F @ y
        y = self.B @ y
        return self._solve(y)


def bfbt_apply(S: BfbtSchur, r):
    return S.apply(r)


class DenseInverse(Preconditioner):
    """Exact (pseudo-)inverse of a small matrix; used by the ideal preconditioner."""

    def __init__(self, A, pseudo=False):
        A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        self.Ainv = np.linalg.pinv(A) if pseudo else np.linalg.inv(A)

    def apply(self, r):
        return self.Ainv @ r


class ExactSchurInverse(DenseInverse):
    """``(B F^{-1} B^T)^{-1}`` formed densely; pseudo-inverse when singular."""

    def __init__(self, F, B, G=None):
        Fd = F.toarray() if sp.issparse(F) else np.asarray(F)
        Bd = B.toarray() if sp.issparse(B) else np.asarray(B)
        Gd = -Bd.T if G is None else (G.toarray() if sp.issparse(G) else np.asarray(G))
        S = -Bd @ np.linalg.solve(Fd, Gd)
        rank = np.linalg.matrix_rank(S)
        super().__init__(S, pseudo=rank < S.shape[0])


class BlockPreconditioner(Preconditioner):
    """Upper block-triangular right preconditioner.

    ``y_p = S~^{-1} r_p`` and ``y_u = F~^{-1} (r_u + B^T y_p)``.
    """

    def __init__(self, F_inv, S_inv, B, Bt_neg=None):
        self.F_inv = as_preconditioner(F_inv)
        self.S_inv = as_preconditioner(S_inv)
        self.B = sp.csr_matrix(B)
        self.Bt_neg = sp.csr_matrix(-self.B.T) if Bt_neg is None else sp.csr_matrix(Bt_neg)
        self.n_u = self.B.shape[1]
        self.variable = bool(self.F_inv.variable or self.S_inv.variable)

    def apply(self, r):
        r = np.asarray(r, dtype=float)
        r_u, r_p = r[: self.n_u], r[self.n_u:]
        y_p = self.S_inv.apply(r_p)
        y_u = self.F_inv.apply(r_u - self.Bt_neg @ y_p)
        return np.concatenate([y_u, y_p])


def block_precond_apply(P: BlockPreconditioner, r):
    return P.apply(r)


# ---------------------------------------------------------------- one-level baseline

class Ilu0Richardson(Preconditioner):
    """``steps`` Richardson sweeps preconditioned by a global ILU(0), from a zero guess."""

    def __init__(self, A, steps=3):
        self.A = with_diagonal(A)
        self.steps = steps
        self.factors = ilu0_factor(self.A)

    def apply(self, r):
        r = np.asarray(r, dtype=float)
        x = ilu0_apply(self.factors, r)
        for _ in range(self.steps - 1):
            x = x + ilu0_apply(self.factors, r - self.A @ x)
        return x


def one_level_ilu0_baseline(T, steps=3) -> Ilu0Richardson:
    """Serial analogue of one-level domain decomposition with ILU(0) subdomain solves."""
    K = T.matrix if hasattr(T, "matrix") else T
    return Ilu0Richardson(K, steps)


def make_block_preconditioner(kind, saddle: SaddleSystem, amg: AmgConfig | None = None):
    """Preconditioner for ``saddle.matrix()`` selected by id string."""
    if kind == "ideal":
        return BlockPreconditioner(
            DenseInverse(saddle.F),
            ExactSchurInverse(saddle.F, saddle.B, saddle.Bt_neg),
            saddle.B,
            saddle.Bt_neg,
        )
    if kind in ("bfbt-amg-ilu0", "bfbt-amg-gmres"):
        base = amg or AmgConfig()
        smoother = SmootherConfig(
            **{**base.smoother.__dict__, "kind": "ilu0" if kind == "bfbt-amg-ilu0" else "gmres-ilu0"}
        )
        cfg = AmgConfig(smoother, base.pre_steps, base.post_steps, base.coarse_threshold, base.max_levels)
        H = build_hierarchy(saddle.F, saddle.layout, cfg)
        return BlockPreconditioner(AmgPreconditioner(H), BfbtSchur(saddle.F, saddle.B), saddle.B, saddle.Bt_neg)
    raise ValueError(f"unknown block preconditioner {kind!r}")
