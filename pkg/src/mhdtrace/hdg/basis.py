"""Nodal Lagrange bases on Gauss-Lobatto points with Gauss-Legendre quadrature."""
from __future__ import annotations

import numpy as np
from numpy.polynomial import legendre as leg


def gauss_lobatto_nodes(p: int) -> np.ndarray:
    if p < 1:
        raise ValueError("degree must be >= 1")
    inner = leg.Legendre.basis(p).deriv().roots() if p > 1 else np.array([])
    return np.concatenate([[-1.0], np.sort(np.real(inner)), [1.0]])


def gauss_legendre(n: int):
    return leg.leggauss(n)


class Lagrange1D:
    """Lagrange polynomials through ``nodes``, evaluated via a Legendre Vandermonde."""

    def __init__(self, nodes):
        self.nodes = np.asarray(nodes, dtype=float)
        self.p = len(self.nodes) - 1
        self._C = np.linalg.inv(leg.legvander(self.nodes, self.p))

    def __call__(self, x):
        return leg.legvander(np.atleast_1d(x), self.p) @ self._C

    def deriv(self, x):
        x = np.atleast_1d(x)
        V = np.zeros((len(x), self.p + 1))
        for k in range(self.p + 1):
            c = np.zeros(self.p + 1)
            c[k] = 1.0
            V[:, k] = leg.legval(x, leg.legder(c))
        return V @ self._C


# face order: bottom, right, top, left; each face parametrised by increasing x or y
FACE_NORMALS = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
FACE_TANGENTS = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
FACE_SIGNS = np.array([1.0, 1.0, -1.0, -1.0])   # n x t


class BasisP:
    """Tensor-product degree-p basis on [-1,1]^2 with p+2 Gauss points per direction.

    Volume dof ``a = i + (p+1) j`` with ``i`` the x index. Quadrature point
    ``q = qi + nq qj`` likewise.
    """

    def __init__(self, p: int, nq: int | None = None):
        self.p = p
        self.P = p + 1
        self.N = self.P ** 2
        self.nodes = gauss_lobatto_nodes(p)
        self.lag = Lagrange1D(self.nodes)
        self.nq = p + 2 if nq is None else nq
        self.xq, self.wq1 = gauss_legendre(self.nq)
        V1 = self.lag(self.xq)
        D1 = self.lag.deriv(self.xq)
        self.V1, self.D1 = V1, D1
        self.phi = np.kron(V1, V1)
        self.dxi = np.kron(V1, D1)
        self.deta = np.kron(D1, V1)
        self.wv = np.kron(self.wq1, self.wq1)
        self.xi_q = np.tile(self.xq, self.nq)
        self.eta_q = np.repeat(self.xq, self.nq)
        # face quadrature: volume basis restricted to each face, trace basis psi
        self.psi = V1
        self.wf = self.wq1
        one_m, one_p = self.lag(-1.0)[0], self.lag(1.0)[0]
        self.phif = np.stack([
            np.kron(one_m[None, :], V1),     # bottom eta=-1
            np.kron(V1, one_p[None, :]),     # right xi=1
            np.kron(one_p[None, :], V1),     # top eta=1
            np.kron(V1, one_m[None, :]),     # left xi=-1
        ])
        # reference coordinates of face quadrature points
        z = np.zeros(self.nq)
        self.face_ref = np.stack([
            np.stack([self.xq, z - 1]), np.stack([z + 1, self.xq]),
            np.stack([self.xq, z + 1]), np.stack([z - 1, self.xq]),
        ])
        self.vol_nodes_ref = np.stack([np.tile(self.nodes, self.P), np.repeat(self.nodes, self.P)])

    def eval_at(self, xi, eta):
        """Volume basis values at reference points, shape (npts, N)."""
        a = self.lag(np.asarray(xi, dtype=float))
        b = self.lag(np.asarray(eta, dtype=float))
        return (b[:, :, None] * a[:, None, :]).reshape(len(a), -1)

    def mass_ref(self):
        return self.phi.T @ (self.wv[:, None] * self.phi)
