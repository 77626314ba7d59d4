import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from mhdtrace.amg import (
    AmgConfig,
    AmgPreconditioner,
    NodalBlockLayout,
    SmootherConfig,
    aggregate,
    build_hierarchy,
    node_graph,
    smooth,
    tentative_prolongator,
    vcycle,
)
from mhdtrace.sparse import ilu0_apply, ilu0_factor

from oracles import laplace_1d, laplace_2d


def path_graph(n):
    return sp.csr_matrix(sp.diags([np.ones(n - 1), np.ones(n - 1)], [-1, 1]))


def members(aggs):
    return sorted(sorted(m.tolist()) for m in aggs.members())


# ---------------------------------------------------------------- aggregation

def test_aggregate_path():
    assert members(aggregate(path_graph(6))) == [[0, 1], [2, 3], [4, 5]]


def test_aggregate_single_node():
    aggs = aggregate(sp.csr_matrix((1, 1)))
    assert aggs.n_aggregates == 1 and members(aggs) == [[0]]


def test_aggregate_star():
    rows = [0, 0, 0, 0]
    cols = [1, 2, 3, 4]
    G = sp.csr_matrix((np.ones(4), (rows, cols)), shape=(5, 5))
    assert members(aggregate(G + G.T)) == [[0, 1, 2, 3, 4]]


def test_aggregate_empty_graph():
    with pytest.raises(ValueError):
        aggregate(sp.csr_matrix((0, 0)))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 60), st.floats(0.02, 0.5), st.integers(0, 10_000))
def test_aggregates_cover_and_connected(n, dens, seed):
    rng = np.random.default_rng(seed)
    G = sp.random(n, n, density=dens, random_state=rng, format="csr")
    G = sp.csr_matrix(G + G.T + path_graph(n))  # connected
    G.setdiag(0)
    G.eliminate_zeros()
    aggs = aggregate(G)
    assert np.all(np.bincount(aggs.node_to_agg) > 0)
    assert len(aggs.node_to_agg) == n
    Gd = G.toarray() != 0
    for m in aggs.members():
        # breadth-first search inside the aggregate
        seen = {m[0]}
        front = [m[0]]
        inside = set(m.tolist())
        while front:
            v = front.pop()
            for w in np.flatnonzero(Gd[v]):
                if w in inside and w not in seen:
                    seen.add(w)
                    front.append(w)
        assert seen == inside
    assert aggregate(G).node_to_agg.tolist() == aggs.node_to_agg.tolist()


# ---------------------------------------------------------------- prolongator and hierarchy

def test_block_identity_operator():
    lay = NodalBlockLayout.uniform(8, 4)
    F = sp.identity(32, format="csr")
    # aggregate on a path-coupled pattern; the operator itself stays the identity
    coupled = sp.csr_matrix(sp.kron(path_graph(8) + sp.identity(8), np.ones((4, 4))))
    aggs = aggregate(node_graph(coupled, lay))
    P, clay = tentative_prolongator(lay, aggs)
    PtP = (P.T @ P).toarray()
    for a, m in enumerate(aggs.members()):
        blk = PtP[4 * a:4 * a + 4, 4 * a:4 * a + 4]
        assert np.array_equal(blk, len(m) * np.eye(4))
    assert np.count_nonzero(PtP - np.diag(np.diag(PtP))) == 0
    assert np.array_equal((P.T @ F @ P).toarray(), PtP)
    assert clay.n_nodes == aggs.n_aggregates


def test_prolongator_injection_rows():
    lay = NodalBlockLayout.uniform(10, 3)
    A = sp.csr_matrix(sp.kron(laplace_1d(10), np.ones((3, 3))))
    P, _ = tentative_prolongator(lay, aggregate(node_graph(A, lay)))
    assert np.array_equal(np.asarray((P != 0).sum(axis=1)).ravel(), np.ones(30))


def test_galerkin_two_level_laplacian():
    A = sp.csr_matrix(laplace_1d(16))
    H = build_hierarchy(A, NodalBlockLayout.uniform(16, 1), AmgConfig(coarse_threshold=8))
    assert H.n_levels == 2
    P = H.levels[0].P.toarray()
    ref = P.T @ laplace_1d(16) @ P
    assert np.max(np.abs(H.levels[1].A.toarray() - ref)) <= 1e-12


def test_galerkin_all_levels_and_decreasing():
    A = sp.csr_matrix(laplace_2d(24))
    H = build_hierarchy(A, NodalBlockLayout.uniform(576, 1), AmgConfig(coarse_threshold=10))
    assert H.n_levels >= 3
    sizes = [lv.A.shape[0] for lv in H.levels]
    assert all(a > b for a, b in zip(sizes, sizes[1:]))
    for lv, nxt in zip(H.levels, H.levels[1:]):
        ref = (lv.P.T @ lv.A @ lv.P).toarray()
        assert np.max(np.abs(nxt.A.toarray() - ref)) <= 1e-12 * np.abs(lv.A).max()
    assert "operator complexity" in H.summary()


def test_single_level_below_threshold_is_exact():
    rng = np.random.default_rng(0)
    A = sp.csr_matrix(laplace_1d(10) + 0.1 * np.diag(rng.random(10)))
    H = build_hierarchy(A, NodalBlockLayout.uniform(10, 1), AmgConfig(coarse_threshold=64))
    assert H.n_levels == 1
    r = rng.standard_normal(10)
    assert np.allclose(vcycle(H, r), np.linalg.solve(A.toarray(), r), atol=1e-10)
    assert not np.any(vcycle(H, np.zeros(10)))


def test_vcycle_zero_rhs():
    A = sp.csr_matrix(laplace_2d(16))
    H = build_hierarchy(A, NodalBlockLayout.uniform(256, 1), AmgConfig(SmootherConfig("ilu0")))
    assert not np.any(vcycle(H, np.zeros(256)))


def test_vcycle_contraction_laplacian_ilu0():
    A = sp.csr_matrix(laplace_2d(32))
    H = build_hierarchy(A, NodalBlockLayout.uniform(1024, 1), AmgConfig(SmootherConfig("ilu0")))
    assert H.n_levels > 1
    rng = np.random.default_rng(1)
    e = rng.standard_normal(1024)
    norms = [np.linalg.norm(e)]
    for _ in range(10):
        # error propagation of the stationary iteration x <- x + V(b - A x)
        e = e - vcycle(H, A @ e)
        norms.append(np.linalg.norm(e))
    factor = (norms[-1] / norms[0]) ** (1 / 10)
    assert factor < 0.5


@pytest.mark.parametrize("kind", ["jacobi", "gauss-seidel", "chebyshev", "ilu0"])
def test_vcycle_linear_for_linear_smoothers(kind):
    A = sp.csr_matrix(laplace_2d(12) + np.eye(144))
    H = build_hierarchy(A, NodalBlockLayout.uniform(144, 1), AmgConfig(SmootherConfig(kind), coarse_threshold=10))
    assert not H.variable
    rng = np.random.default_rng(2)
    r1, r2 = rng.standard_normal(144), rng.standard_normal(144)
    a, b = 1.7, -0.3
    lhs = vcycle(H, a * r1 + b * r2)
    rhs = a * vcycle(H, r1) + b * vcycle(H, r2)
    assert np.max(np.abs(lhs - rhs)) <= 1e-11 * max(1.0, np.max(np.abs(lhs)))


def test_gmres_smoother_marks_hierarchy_variable():
    A = sp.csr_matrix(laplace_2d(12))
    H = build_hierarchy(A, NodalBlockLayout.uniform(144, 1), AmgConfig(coarse_threshold=10))
    assert H.variable and AmgPreconditioner(H).variable


def test_hierarchy_deterministic():
    A = sp.csr_matrix(laplace_2d(16))
    lay = NodalBlockLayout.uniform(256, 1)
    r = np.random.default_rng(3).standard_normal(256)
    y1 = vcycle(build_hierarchy(A, lay), r)
    y2 = vcycle(build_hierarchy(A, lay), r)
    assert np.array_equal(y1, y2)


# ---------------------------------------------------------------- smoothers

@pytest.mark.parametrize("kind", ["gauss-seidel", "ilu0", "gmres-ilu0"])
def test_smoother_identity_one_step(kind):
    b = np.array([1.0, -2.0, 3.5])
    x = smooth(SmootherConfig(kind, steps=1), sp.identity(3, format="csr"), np.zeros(3), b)
    assert np.allclose(x, b, atol=1e-15)


def test_jacobi_closed_form():
    x = smooth(SmootherConfig("jacobi", steps=1), sp.csr_matrix(np.diag([2.0, 4.0])), np.zeros(2), np.array([2.0, 4.0]))
    assert np.allclose(x, [2 / 3, 2 / 3], atol=1e-15)


@pytest.mark.parametrize("extra", [0.0, 0.4])
def test_gmres_ilu0_beats_richardson(extra):
    # extra > 0 adds an off-pattern coupling so ILU(0) is no longer an exact solve
    A = sp.csr_matrix(laplace_1d(8) + np.diag(np.linspace(0, 1, 8)) + extra * np.eye(8, k=3))
    b = np.arange(1.0, 9.0)
    x_g = smooth(SmootherConfig("gmres-ilu0", steps=3), A, np.zeros(8), b)
    F = ilu0_factor(A)
    x_r = np.zeros(8)
    for _ in range(3):
        x_r = x_r + ilu0_apply(F, b - A @ x_r)
    assert np.linalg.norm(b - A @ x_g) <= np.linalg.norm(b - A @ x_r) + 1e-12


def test_jacobi_zero_diagonal_error():
    with pytest.raises(ArithmeticError):
        smooth(SmootherConfig("jacobi"), sp.csr_matrix([[0.0, 1.0], [1.0, 0.0]]), np.zeros(2), np.ones(2))


def test_smoother_config_validation():
    with pytest.raises(ValueError):
        SmootherConfig("sor")
    with pytest.raises(ValueError):
        SmootherConfig("ilu0", steps=0)
