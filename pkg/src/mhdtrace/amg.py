"""Plain-aggregation system AMG for nodal-block operators.

The fine operator is viewed as a graph of nodes, each node owning a short
run of consecutive dofs (velocity components, tangential magnetic field,
Lagrange multiplier). Aggregates are built on that node graph and the
tentative prolongator injects every field of a fine node into the same
field of its aggregate, so variables stay coupled under coarsening.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numba
import numpy as np
import scipy.sparse as sp

from .krylov import Preconditioner, gmres
from .sparse import (
    DimensionError,
    SingularMatrixError,
    ilu0_apply,
    ilu0_factor,
    sparse_lu_factor,
)

__all__ = [
    "NodalBlockLayout",
    "Aggregates",
    "SmootherConfig",
    "AmgConfig",
    "AmgLevel",
    "AmgHierarchy",
    "AmgPreconditioner",
    "aggregate",
    "node_graph",
    "tentative_prolongator",
    "build_hierarchy",
    "vcycle",
    "smooth",
    "make_smoother",
]

SMOOTHER_KINDS = ("jacobi", "gauss-seidel", "chebyshev", "ilu0", "gmres-ilu0")


@dataclass(frozen=True)
class NodalBlockLayout:
    """Dofs of node ``i`` occupy ``node_ptr[i]:node_ptr[i+1]``; ``field`` tags each dof."""

    node_ptr: np.ndarray
    field: np.ndarray

    def __post_init__(self):
        ptr = np.asarray(self.node_ptr)
        if ptr[0] != 0 or np.any(np.diff(ptr) <= 0) or ptr[-1] != len(self.field):
            raise ValueError("node_ptr must start at 0, strictly increase and end at n_dofs")

    @classmethod
    def uniform(cls, n_nodes, dofs_per_node):
        ptr = np.arange(n_nodes + 1) * dofs_per_node
        return cls(ptr, np.tile(np.arange(dofs_per_node), n_nodes))

    @property
    def n_nodes(self):
        return len(self.node_ptr) - 1

    @property
    def n_dofs(self):
        return int(self.node_ptr[-1])

    @property
    def dofs_per_node(self):
        return int(np.max(np.diff(self.node_ptr)))

    @property
    def n_fields(self):
        return int(self.field.max()) + 1

    def node_of_dof(self):
        return np.repeat(np.arange(self.n_nodes), np.diff(self.node_ptr))

    def dof_range(self, node):
        return range(int(self.node_ptr[node]), int(self.node_ptr[node + 1]))


@dataclass(frozen=True)
class Aggregates:
    node_to_agg: np.ndarray
    n_aggregates: int

    def members(self):
        order = np.argsort(self.node_to_agg, kind="stable")
        counts = np.bincount(self.node_to_agg, minlength=self.n_aggregates)
        return np.split(order, np.cumsum(counts)[:-1])


def node_graph(A, layout: NodalBlockLayout) -> sp.csr_matrix:
    """Collapse ``A`` to its node graph: nodes i != j are adjacent if any dof pair couples."""
    if A.shape[0] != layout.n_dofs:
        raise DimensionError("operator size does not match the nodal layout")
    nod = layout.node_of_dof()
    S = sp.csr_matrix(
        (np.ones(layout.n_dofs), (nod, np.arange(layout.n_dofs))),
        shape=(layout.n_nodes, layout.n_dofs),
    )
    pattern = sp.csr_matrix(A, copy=True)
    pattern.data = np.ones_like(pattern.data)
    G = sp.csr_matrix(S @ pattern @ S.T)
    G = G + G.T
    G.setdiag(0)
    G.eliminate_zeros()
    G.sort_indices()
    return sp.csr_matrix(G)


def aggregate(graph, seed_order=None) -> Aggregates:
    """Greedy root aggregation.

    Nodes are visited in ``seed_order`` (natural order by default); an
    unaggregated node becomes a root and absorbs its unaggregated
    neighbours. Singleton aggregates that have a neighbour are merged into
    the aggregate of their first neighbour.
    """
    G = sp.csr_matrix(graph)
    n = G.shape[0]
    if n == 0:
        raise ValueError("cannot aggregate an empty graph")
    order = np.arange(n) if seed_order is None else np.asarray(seed_order)
    agg = _greedy_aggregate(n, G.indptr.astype(np.int64), G.indices.astype(np.int64),
                            order.astype(np.int64))
    _, agg = np.unique(agg, return_inverse=True)
    return Aggregates(agg.astype(np.int64), int(agg.max()) + 1)


@numba.njit(cache=True)
def _greedy_aggregate(n, indptr, indices, order):
    agg = np.full(n, -1, dtype=np.int64)
    size = np.zeros(n, dtype=np.int64)
    na = 0
    for node in order:
        if agg[node] != -1:
            continue
        agg[node] = na
        size[na] = 1
        for jj in range(indptr[node], indptr[node + 1]):
            nb = indices[jj]
            if nb != node and agg[nb] == -1:
                agg[nb] = na
                size[na] += 1
        na += 1
    for node in order:
        a = agg[node]
        if size[a] == 1:
            for jj in range(indptr[node], indptr[node + 1]):
                nb = indices[jj]
                if nb != node:
                    size[a] = 0
                    agg[node] = agg[nb]
                    size[agg[nb]] += 1
                    break
    return agg


def tentative_prolongator(layout: NodalBlockLayout, aggs: Aggregates):
    """Unsmoothed block-injection prolongator and the coarse nodal layout."""
    nod = layout.node_of_dof()
    nf = int(layout.field.max()) + 1
    key = aggs.node_to_agg[nod] * nf + layout.field
    ukeys, coarse_dof = np.unique(key, return_inverse=True)
    c_agg = ukeys // nf
    c_field = ukeys % nf
    counts = np.bincount(c_agg, minlength=aggs.n_aggregates)
    c_ptr = np.concatenate([[0], np.cumsum(counts)])
    P = sp.csr_matrix(
        (np.ones(layout.n_dofs), (np.arange(layout.n_dofs), coarse_dof)),
        shape=(layout.n_dofs, len(ukeys)),
    )
    P.sort_indices()
    return P, NodalBlockLayout(c_ptr, c_field)


# ---------------------------------------------------------------- smoothers

@dataclass(frozen=True)
class SmootherConfig:
    kind: str = "gmres-ilu0"
    steps: int = 3
    jacobi_damping: float = 2.0 / 3.0
    cheb_ratio: float = 30.0
    cheb_power_iters: int = 10

    def __post_init__(self):
        if self.kind not in SMOOTHER_KINDS:
            raise ValueError(f"unknown smoother {self.kind!r}; choose from {SMOOTHER_KINDS}")
        if self.steps < 1:
            raise ValueError("smoother steps must be >= 1")

    @property
    def variable(self):
        return self.kind == "gmres-ilu0"


@numba.njit(cache=True)
def _gs_sweep(n, indptr, indices, data, x, b):
    for i in range(n):
        s = b[i]
        d = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            j = indices[jj]
            if j == i:
                d = data[jj]
            else:
                s -= data[jj] * x[j]
        x[i] = s / d


class _Smoother:
    def __init__(self, A, cfg: SmootherConfig):
        self.A = sp.csr_matrix(A)
        self.cfg = cfg

    def _diag(self):
        d = self.A.diagonal()
        if np.any(d == 0.0):
            raise ZeroDivisionError(f"zero diagonal in row {int(np.flatnonzero(d == 0.0)[0])}")
        return d


class _Jacobi(_Smoother):
    def __init__(self, A, cfg):
        super().__init__(A, cfg)
        self.dinv = 1.0 / self._diag()

    def smooth(self, x, b):
        for _ in range(self.cfg.steps):
            x = x + self.cfg.jacobi_damping * self.dinv * (b - self.A @ x)
        return x


class _GaussSeidel(_Smoother):
    def __init__(self, A, cfg):
        super().__init__(A, cfg)
        self._diag()
        self.A.sort_indices()

    def smooth(self, x, b):
        x = np.array(x, dtype=float, copy=True)
        A = self.A
        for _ in range(self.cfg.steps):
            _gs_sweep(A.shape[0], A.indptr, A.indices, A.data, x, b)
        return x


class _Chebyshev(_Smoother):
    """Jacobi-scaled Chebyshev on ``[lmax/ratio, lmax]``, lmax from power iteration."""

    def __init__(self, A, cfg):
        super().__init__(A, cfg)
        self.dinv = 1.0 / self._diag()
        v = np.random.default_rng(0).standard_normal(A.shape[0])
        lam = 1.0
        for _ in range(cfg.cheb_power_iters):
            w = self.dinv * (self.A @ v)
            lam = np.linalg.norm(w) / np.linalg.norm(v)
            v = w / np.linalg.norm(w)
        self.lmax = lam
        self.lmin = self.lmax / cfg.cheb_ratio

    def smooth(self, x, b):
        theta = 0.5 * (self.lmax + self.lmin)
        delta = 0.5 * (self.lmax - self.lmin)
        sigma = theta / delta
        rho = 1.0 / sigma
        r = self.dinv * (b - self.A @ x)
        d = r / theta
        for _ in range(self.cfg.steps):
            x = x + d
            r = r - self.dinv * (self.A @ d)
            rho_new = 1.0 / (2.0 * sigma - rho)
            d = rho_new * rho * d + 2.0 * rho_new / delta * r
            rho = rho_new
        return x


class _Ilu0Richardson(_Smoother):
    def __init__(self, A, cfg):
        super().__init__(A, cfg)
        self.factors = ilu0_factor(self.A)

    def smooth(self, x, b):
        for _ in range(self.cfg.steps):
            x = x + ilu0_apply(self.factors, b - self.A @ x)
        return x


class _GmresIlu0(_Smoother):
    """``steps`` inner GMRES iterations on the correction, right-preconditioned by ILU(0)."""

    def __init__(self, A, cfg):
        super().__init__(A, cfg)
        self.factors = ilu0_factor(self.A)

    def smooth(self, x, b):
        r = b - self.A @ x
        if not np.any(r):
            return np.array(x, dtype=float, copy=True)
        e, _ = gmres(self.A, r, M=lambda v: ilu0_apply(self.factors, v),
                     tol=0.0, maxit=self.cfg.steps)
        return x + e


_SMOOTHERS = {
    "jacobi": _Jacobi,
    "gauss-seidel": _GaussSeidel,
    "chebyshev": _Chebyshev,
    "ilu0": _Ilu0Richardson,
    "gmres-ilu0": _GmresIlu0,
}


def make_smoother(cfg: SmootherConfig, A):
    return _SMOOTHERS[cfg.kind](A, cfg)


def smooth(cfg: SmootherConfig, A, x0, b):
    """One application of the configured smoother starting from ``x0``."""
    if A.shape[0] != len(b) or len(x0) != len(b):
        raise DimensionError("smoother dimensions do not match")
    return make_smoother(cfg, A).smooth(np.asarray(x0, dtype=float), np.asarray(b, dtype=float))


# ---------------------------------------------------------------- hierarchy

@dataclass(frozen=True)
class AmgConfig:
    smoother: SmootherConfig = field(default_factory=SmootherConfig)
    pre_steps: int = 3
    post_steps: int = 3
    coarse_threshold: int = 64
    max_levels: int = 10


@dataclass
class AmgLevel:
    A: sp.csr_matrix
    layout: NodalBlockLayout
    P: sp.csr_matrix | None = None
    R: sp.csr_matrix | None = None
    aggregates: Aggregates | None = None
    pre: object = None
    post: object = None


@dataclass
class AmgHierarchy:
    levels: list
    coarse_lu: object
    config: AmgConfig

    @property
    def n_levels(self):
        return len(self.levels)

    @property
    def variable(self):
        return self.config.smoother.variable and self.n_levels > 1

    def operator_complexity(self):
        nnz = [lv.A.nnz for lv in self.levels]
        return sum(nnz) / nnz[0]

    def summary(self) -> str:
        lines = [f"{'level':>5} {'nodes':>8} {'dofs':>9} {'nnz':>11}"]
        for i, lv in enumerate(self.levels):
            lines.append(f"{i:>5} {lv.layout.n_nodes:>8} {lv.A.shape[0]:>9} {lv.A.nnz:>11}")
        lines.append(f"operator complexity: {self.operator_complexity():.3f}")
        return "\n".join(lines)


def build_hierarchy(F, layout: NodalBlockLayout, cfg: AmgConfig | None = None) -> AmgHierarchy:
    """Aggregation hierarchy with Galerkin coarse operators and a direct coarsest solve."""
    cfg = cfg or AmgConfig()
    A = sp.csr_matrix(F)
    A.sort_indices()
    if A.shape[0] != layout.n_dofs or A.shape[0] != A.shape[1]:
        raise DimensionError("F must be square with size node_count x dofs_per_node")
    levels = []
    while True:
        lv = AmgLevel(A=A, layout=layout)
        levels.append(lv)
        if layout.n_nodes <= cfg.coarse_threshold or len(levels) >= cfg.max_levels:
            break
        aggs = aggregate(node_graph(A, layout))
        if aggs.n_aggregates >= layout.n_nodes:
            break
        P, c_layout = tentative_prolongator(layout, aggs)
        R = sp.csr_matrix(P.T)
        Ac = sp.csr_matrix(R @ A @ P)
        Ac.sort_indices()
        lv.P, lv.R, lv.aggregates = P, R, aggs
        A, layout = Ac, c_layout
    pre_cfg = replace(cfg.smoother, steps=cfg.pre_steps)
    post_cfg = replace(cfg.smoother, steps=cfg.post_steps)
    for lv in levels[:-1]:
        lv.pre = make_smoother(pre_cfg, lv.A)
        lv.post = lv.pre if post_cfg == pre_cfg else make_smoother(post_cfg, lv.A)
    try:
        coarse = sparse_lu_factor(levels[-1].A)
    except SingularMatrixError as exc:
        raise SingularMatrixError(f"coarsest AMG operator is singular: {exc}") from exc
    return AmgHierarchy(levels, coarse, cfg)


def vcycle(H: AmgHierarchy, r, level: int = 0):
    """One V-cycle approximating ``A_level^{-1} r``."""
    r = np.asarray(r, dtype=float)
    lv = H.levels[level]
    if len(r) != lv.A.shape[0]:
        raise DimensionError("residual length does not match the level operator")
    if level == H.n_levels - 1:
        return H.coarse_lu.solve(r)
    x = lv.pre.smooth(np.zeros_like(r), r)
    xc = vcycle(H, lv.R @ (r - lv.A @ x), level + 1)
    x = x + lv.P @ xc
    return lv.post.smooth(x, r)


class AmgPreconditioner(Preconditioner):
    def __init__(self, H: AmgHierarchy):
        self.H = H
        self.variable = H.variable

    def apply(self, r):
        return vcycle(self.H, r)
