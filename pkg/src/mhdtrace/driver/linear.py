"""Linear solves of the condensed trace system with the selectable preconditioners."""
from __future__ import annotations

from dataclasses import dataclass
import time

import numpy as np
import scipy.sparse as sp

from ..amg import AmgConfig
from ..blockprec import make_block_preconditioner, one_level_ilu0_baseline, split_saddle
from ..krylov import IterationHistory, fgmres, gmres
from ..sparse import sparse_lu_factor

SOLVERS = ("direct", "dd-ilu0", "bfbt-amg-ilu0", "bfbt-amg-gmres", "ideal")
DEFAULT_MAXIT = {"dd-ilu0": 1000, "bfbt-amg-ilu0": 200, "bfbt-amg-gmres": 200, "ideal": 200}


@dataclass
class SolverConfig:
    kind: str = "bfbt-amg-gmres"
    tol: float = 1e-6
    tol_is_relative: bool = True
    maxit: int | None = None
    amg: AmgConfig | None = None
    dd_steps: int = 3
    outer: str = "auto"

    def __post_init__(self):
        if self.kind not in SOLVERS:
            raise ValueError(f"unknown solver {self.kind!r}; choose from {SOLVERS}")
        if self.outer not in ("auto", "gmres", "fgmres"):
            raise ValueError(f"unknown outer Krylov method {self.outer!r}")

    @property
    def max_iterations(self):
        return self.maxit if self.maxit is not None else DEFAULT_MAXIT.get(self.kind, 0)

    @property
    def flexible(self):
        # the inner GMRES smoother makes the preconditioner vary between applications
        if self.outer == "auto":
            return self.kind == "bfbt-amg-gmres"
        return self.outer == "fgmres"


@dataclass
class LinearResult:
    x: np.ndarray
    history: IterationHistory
    setup_time: float
    solve_time: float

    @property
    def iterations(self):
        return self.history.iterations

    @property
    def converged(self):
        return self.history.converged


def pinned_direct_solve(T):
    """Sparse LU with the first pressure-average row replaced by identity when rho is gauge-free."""
    K = T.matrix.tolil(copy=True)
    b = T.rhs.copy()
    if T.has_pressure_nullspace:
        i0 = T.block_index("rho")[0]
        K[i0, :] = 0.0
        K[i0, i0] = 1.0
        b[i0] = 0.0
    return sparse_lu_factor(sp.csr_matrix(K)).solve(b)


def solve_trace(T, cfg: SolverConfig) -> LinearResult:
    t0 = time.perf_counter()
    if cfg.kind == "direct":
        x = pinned_direct_solve(T)
        t1 = time.perf_counter()
        bn = np.linalg.norm(T.rhs)
        res = np.linalg.norm(T.rhs - T.matrix @ x) / (bn if bn > 0 else 1.0)
        return LinearResult(x, IterationHistory([1.0 if bn > 0 else 0.0, res], True), t1 - t0, 0.0)
    if cfg.kind == "dd-ilu0":
        M = one_level_ilu0_baseline(T, cfg.dd_steps)
        t1 = time.perf_counter()
        krylov = fgmres if cfg.flexible else gmres
        x, hist = krylov(T.matrix, T.rhs, M, cfg.tol, cfg.tol_is_relative, cfg.max_iterations)
        return LinearResult(x, hist, t1 - t0, time.perf_counter() - t1)
    S = split_saddle(T)
    M = make_block_preconditioner(cfg.kind, S, cfg.amg)
    K = S.matrix()
    t1 = time.perf_counter()
    solver = fgmres if (cfg.flexible or M.variable) else gmres
    y, hist = solver(K, S.rhs, M, cfg.tol, cfg.tol_is_relative, cfg.max_iterations)
    return LinearResult(S.from_saddle(y), hist, t1 - t0, time.perf_counter() - t1)
