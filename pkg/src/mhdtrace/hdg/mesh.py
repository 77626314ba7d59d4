"""Structured quadrilateral meshes with unique edge numbering and periodic pairing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIDES = ("bottom", "right", "top", "left")


@dataclass
class QuadMesh:
    nx: int
    ny: int
    xs: np.ndarray              # vertex x coordinates, length nx+1
    ys: np.ndarray              # vertex y coordinates, length ny+1
    periodic: tuple
    elem_edges: np.ndarray      # (Nel, 4) edge id per face (bottom, right, top, left)
    edge_elems: list            # per edge: list of (elem, face)
    edge_side: np.ndarray       # per edge: boundary side index into SIDES, or -1
    edge_horizontal: np.ndarray  # per edge: True for edges parallel to x

    @property
    def n_elements(self):
        return self.nx * self.ny

    @property
    def n_edges(self):
        return len(self.edge_side)

    @property
    def hx(self):
        return np.tile(np.diff(self.xs), self.ny)

    @property
    def hy(self):
        return np.repeat(np.diff(self.ys), self.nx)

    @property
    def x0(self):
        return np.tile(self.xs[:-1], self.ny)

    @property
    def y0(self):
        return np.repeat(self.ys[:-1], self.nx)

    @property
    def bounds(self):
        return (self.xs[0], self.xs[-1], self.ys[0], self.ys[-1])

    def to_physical(self, xi, eta):
        """Map reference points to physical coordinates for every element: (Nel, npts) each."""
        x = self.x0[:, None] + 0.5 * (np.asarray(xi)[None, :] + 1.0) * self.hx[:, None]
        y = self.y0[:, None] + 0.5 * (np.asarray(eta)[None, :] + 1.0) * self.hy[:, None]
        return x, y

    def boundary_edges(self, side=None):
        if side is None:
            return np.flatnonzero(self.edge_side >= 0)
        return np.flatnonzero(self.edge_side == SIDES.index(side))


def build_mesh(nx, ny, bounds=(0.0, 1.0, 0.0, 1.0), periodic=(False, False), grading=0.0) -> QuadMesh:
    """Axis-aligned nx-by-ny quad mesh.

    ``grading`` > 0 clusters rows toward the mid-line in y through a sinh map.
    Elements are numbered ``i + nx j``; horizontal edges first, then vertical.
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be >= 1")
    x0, x1, y0, y1 = map(float, bounds)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate bounds {bounds}")
    px, py = bool(periodic[0]), bool(periodic[1])
    xs = np.linspace(x0, x1, nx + 1)
    s = np.linspace(-1.0, 1.0, ny + 1)
    if grading > 0:
        s = np.sinh(grading * s) / np.sinh(grading)
    ys = 0.5 * (y0 + y1) + 0.5 * (y1 - y0) * s
    ys[0], ys[-1] = y0, y1

    nyh = ny if py else ny + 1
    nxv = nx if px else nx + 1
    n_h = nx * nyh

    def H(i, j):
        return i + nx * (j % ny if py else j)

    def V(i, j):
        return n_h + (i % nx if px else i) + nxv * j

    n_edges = n_h + nxv * ny
    elem_edges = np.empty((nx * ny, 4), dtype=np.int64)
    edge_elems = [[] for _ in range(n_edges)]
    for j in range(ny):
        for i in range(nx):
            e = i + nx * j
            ids = (H(i, j), V(i + 1, j), H(i, j + 1), V(i, j))
            elem_edges[e] = ids
            for f, eid in enumerate(ids):
                edge_elems[eid].append((e, f))
    edge_side = np.full(n_edges, -1, dtype=np.int64)
    horiz = np.zeros(n_edges, dtype=bool)
    horiz[:n_h] = True
    for eid, inc in enumerate(edge_elems):
        if len(inc) == 1:
            edge_side[eid] = inc[0][1]
        elif len(inc) != 2:
            raise ValueError(f"edge {eid} has {len(inc)} incident element sides")
    return QuadMesh(nx, ny, xs, ys, (px, py), elem_edges, edge_elems, edge_side, horiz)
