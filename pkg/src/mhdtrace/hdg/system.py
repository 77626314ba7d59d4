"""Global trace system: numbering, assembly, boundary conditions and reconstruction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..sparse import csr_from_triplets
from .basis import FACE_NORMALS, FACE_TANGENTS, BasisP
from .local import IB, IJ, IQ, IR, IU, N_VOL_FIELDS, ElementBatch, assemble_local, local_sizes, static_condense
from .mesh import SIDES, QuadMesh
from .params import MhdParams

# dof blocks of the full trace vector, in storage order (U, rho, Bt, R)
BLOCK_U, BLOCK_RHO, BLOCK_BT, BLOCK_R = 0, 1, 2, 3
BLOCK_NAMES = ("U", "rho", "Bt", "R")
BC_KINDS = ("dirichlet", "mirror-conductor", "mirror-tangential")


class TraceLayout:
    """Numbering of the full (unconstrained) trace vector.

    node = edge*(p+1) + k. U at 2*node + i, rho at 2*Nn + e, Bt at
    2*Nn + Nel + node, R at 3*Nn + Nel + node.
    """

    def __init__(self, mesh: QuadMesh, basis: BasisP):
        self.mesh, self.basis = mesh, basis
        P = basis.P
        self.P = P
        self.n_el = mesh.n_elements
        self.n_nodes = mesh.n_edges * P
        Nn, Ne = self.n_nodes, self.n_el
        self.n_full = 4 * Nn + Ne
        self.dof_block = np.concatenate([
            np.full(2 * Nn, BLOCK_U), np.full(Ne, BLOCK_RHO), np.full(Nn, BLOCK_BT), np.full(Nn, BLOCK_R)])
        nodes = np.arange(Nn)
        self.dof_node = np.concatenate([np.repeat(nodes, 2), np.full(Ne, -1), nodes, nodes])
        self.dof_field = np.concatenate([np.tile([0, 1], Nn), np.full(Ne, -1), np.full(Nn, 2), np.full(Nn, 3)])
        nv, nt = local_sizes(basis.p)
        l2g = np.empty((Ne, nt), dtype=np.int64)
        k = np.arange(P)
        for f in range(4):
            node = mesh.elem_edges[:, f][:, None] * P + k[None, :]
            for g in range(4):
                o = (4 * f + g) * P
                l2g[:, o:o + P] = self.dof(g, node)
        l2g[:, -1] = self.rho_dof(np.arange(Ne))
        self.l2g = l2g
        # physical coordinates of trace nodes (from the first incident element side)
        xy = np.empty((Nn, 2))
        for eid, inc in enumerate(mesh.edge_elems):
            e, f = inc[0]
            r = basis.nodes
            if f in (0, 2):
                xs = mesh.x0[e] + 0.5 * (r + 1) * mesh.hx[e]
                ys = np.full(P, mesh.y0[e] + (mesh.hy[e] if f == 2 else 0.0))
            else:
                ys = mesh.y0[e] + 0.5 * (r + 1) * mesh.hy[e]
                xs = np.full(P, mesh.x0[e] + (mesh.hx[e] if f == 1 else 0.0))
            xy[eid * P:(eid + 1) * P] = np.stack([xs, ys], axis=1)
        self.node_xy = xy

    def dof(self, field, node):
        Nn, Ne = self.n_nodes, self.n_el
        node = np.asarray(node)
        if field in (0, 1):
            return 2 * node + field
        if field == 2:
            return 2 * Nn + Ne + node
        if field == 3:
            return 3 * Nn + Ne + node
        raise ValueError(f"bad trace field {field}")

    def rho_dof(self, e):
        return 2 * self.n_nodes + np.asarray(e)

    def edge_nodes(self, eid):
        return eid * self.P + np.arange(self.P)


@dataclass
class BoundarySpec:
    """Boundary treatment for one side of the domain.

    ``u(x, y, t)`` and ``b(x, y, t)`` return component pairs; ``u`` is
    used by "dirichlet", ``b`` (tangential part) by "dirichlet" and
    "mirror-tangential".
    """

    kind: str
    u: object = None
    b: object = None

    def __post_init__(self):
        if self.kind not in BC_KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}")


@dataclass
class VolumeState:
    coeffs: np.ndarray   # (Nel, 11, N)
    p: int

    @classmethod
    def zeros(cls, n_el, p):
        return cls(np.zeros((n_el, N_VOL_FIELDS, (p + 1) ** 2)), p)

    def copy(self):
        return VolumeState(self.coeffs.copy(), self.p)

    @property
    def L(self):
        return self.coeffs[:, 0:4]

    @property
    def u(self):
        return self.coeffs[:, IU(0):IU(0) + 2]

    @property
    def q(self):
        return self.coeffs[:, IQ]

    @property
    def J(self):
        return self.coeffs[:, IJ]

    @property
    def b(self):
        return self.coeffs[:, IB(0):IB(0) + 2]

    @property
    def r(self):
        return self.coeffs[:, IR]

    def ravel(self):
        return self.coeffs.ravel()


@dataclass
class TraceState:
    values: np.ndarray   # full trace vector
    layout: TraceLayout

    @property
    def uhat(self):
        Nn = self.layout.n_nodes
        return self.values[:2 * Nn].reshape(Nn, 2)

    @property
    def rho(self):
        o = 2 * self.layout.n_nodes
        return self.values[o:o + self.layout.n_el]

    @property
    def bt(self):
        o = 2 * self.layout.n_nodes + self.layout.n_el
        return self.values[o:o + self.layout.n_nodes]

    @property
    def rhat(self):
        o = 3 * self.layout.n_nodes + self.layout.n_el
        return self.values[o:o + self.layout.n_nodes]


@dataclass
class TraceSystem:
    """Condensed trace system restricted to the free (non-Dirichlet) dofs."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    layout: TraceLayout
    free: np.ndarray          # free positions in the full trace vector
    fixed_values: np.ndarray  # full-length vector holding the prescribed values
    R: np.ndarray             # (Nel, n_vol, n_trace) reconstruction
    s: np.ndarray             # (Nel, n_vol)
    full_matrix: sp.csr_matrix | None = None
    full_rhs: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def dof_block(self):
        return self.layout.dof_block[self.free]

    @property
    def dof_node(self):
        return self.layout.dof_node[self.free]

    @property
    def dof_field(self):
        return self.layout.dof_field[self.free]

    def expand(self, x):
        full = self.fixed_values.copy()
        full[self.free] = x
        return full

    def block_index(self, name):
        return np.flatnonzero(self.dof_block == BLOCK_NAMES.index(name))

    def blocks(self):
        """Sub-blocks named as in the (U, rho, Bt, R) block form."""
        idx = {nm: self.block_index(nm) for nm in BLOCK_NAMES}
        K = self.matrix

        def sub(r, c):
            return K[idx[r]][:, idx[c]].tocsr()

        return {
            "A": sub("U", "U"), "-DT": sub("U", "rho"), "E": sub("U", "Bt"), "G": sub("U", "R"),
            "D": sub("rho", "U"), "F": sub("Bt", "U"), "C": sub("Bt", "Bt"), "J": sub("Bt", "R"),
            "H": sub("R", "U"), "K": sub("R", "Bt"), "L": sub("R", "R"),
            "rho_rho": sub("rho", "rho"), "rho_Bt": sub("rho", "Bt"), "rho_R": sub("rho", "R"),
            "Bt_rho": sub("Bt", "rho"), "R_rho": sub("R", "rho"),
        }

    @property
    def has_pressure_nullspace(self):
        """True when every velocity-trace column of D sums to zero over elements."""
        D = self.matrix[self.block_index("rho")]
        col = np.asarray(D.sum(axis=0)).ravel()
        scale = max(abs(D).max(), 1e-300) if D.nnz else 1.0
        return bool(np.max(np.abs(col)) <= 1e-10 * scale)


# ---------------------------------------------------------------- field evaluation

def eval_volume(basis: BasisP, coeffs):
    """Values of (..., N) nodal coefficients at volume quadrature points."""
    return coeffs @ basis.phi.T


def eval_faces(basis: BasisP, coeffs):
    """(E, C, N) -> (E, 4, C, nq) values on the element's own face quadrature."""
    return np.einsum("fqa,eca->efcq", basis.phif, coeffs)


def project(mesh: QuadMesh, basis: BasisP, fn, t=0.0, ncomp=2):
    """L2 projection of ``fn(x, y, t)`` (tuple of components) onto each element, (Nel, ncomp, N)."""
    x, y = mesh.to_physical(basis.xi_q, basis.eta_q)
    vals = fn(x, y, t)
    if ncomp == 1 and not isinstance(vals, (tuple, list)):
        vals = (vals,)
    vals = np.stack([np.broadcast_to(np.asarray(v, dtype=float), x.shape) for v in vals], axis=1)
    Mref = basis.mass_ref()
    b = np.einsum("ecq,qa->eca", vals * basis.wv, basis.phi)
    return np.linalg.solve(Mref, b.reshape(-1, basis.N).T).T.reshape(b.shape)


def face_average(mesh: QuadMesh, vals):
    """Replace (E, 4, C, nq) face values by the mean of the two element sides sharing each edge."""
    out = vals.copy()
    pairs = [inc for inc in mesh.edge_elems if len(inc) == 2]
    if pairs:
        (e1, f1), (e2, f2) = np.array(pairs).transpose(1, 2, 0)
        avg = 0.5 * (vals[e1, f1] + vals[e2, f2])
        out[e1, f1] = avg
        out[e2, f2] = avg
    return out


# ---------------------------------------------------------------- assembly

def _forcing(fn, x, y, t):
    if fn is None:
        return None
    v = fn(x, y, t)
    return np.stack([np.broadcast_to(np.asarray(c, dtype=float), x.shape) for c in v], axis=1)


def assemble_trace_system(mesh: QuadMesh, basis: BasisP, params: MhdParams, picard: VolumeState,
                          dt=np.inf, prev: VolumeState | None = None, boundary=None, f=None, g=None,
                          t=0.0, chunk=256, apply_bc=True, face_avg=True) -> TraceSystem:
    """Assemble the condensed trace system for frozen fields (w, d) = (u, b) of ``picard``.

    ``boundary`` maps each non-periodic side name to a :class:`BoundarySpec`.
    ``f``/``g`` are forcings ``fn(x, y, t) -> (c1, c2)`` evaluated at time ``t``.
    """
    layout = TraceLayout(mesh, basis)
    nv, nt = local_sizes(basis.p)
    Ne = mesh.n_elements
    xq, yq = mesh.to_physical(basis.xi_q, basis.eta_q)
    hx, hy = mesh.hx, mesh.hy
    w_all = np.concatenate([picard.u, picard.b], axis=1)
    wf_all = face_average(mesh, eval_faces(basis, w_all)) if face_avg else eval_faces(basis, w_all)
    R = np.empty((Ne, nv, nt))
    s = np.empty((Ne, nv))
    Ks, Fs = [], []
    for lo in range(0, Ne, chunk):
        sl = slice(lo, min(lo + chunk, Ne))
        wq = eval_volume(basis, w_all[sl])
        wf = wf_all[sl]
        eb = ElementBatch(
            hx[sl], hy[sl], wq[:, :2], wq[:, 2:], wf[:, :, :2], wf[:, :, 2:],
            _forcing(f, xq[sl], yq[sl], t), _forcing(g, xq[sl], yq[sl], t),
            None if prev is None else prev.u[sl], None if prev is None else prev.b[sl],
        )
        A, rhs = assemble_local(basis, params, eb, dt)
        K, F, R[sl], s[sl] = static_condense(A, rhs, nv)
        Ks.append(K)
        Fs.append(F)
    K = np.concatenate(Ks)
    F = np.concatenate(Fs)
    l2g = layout.l2g
    rows = np.broadcast_to(l2g[:, :, None], K.shape).ravel()
    cols = np.broadcast_to(l2g[:, None, :], K.shape).ravel()
    n = layout.n_full
    Kg = csr_from_triplets(rows, cols, K.ravel(), (n, n))
    Fg = np.bincount(l2g.ravel(), weights=F.ravel(), minlength=n)
    T = TraceSystem(Kg, Fg, layout, np.arange(n), np.zeros(n), R, s, Kg, Fg)
    if apply_bc:
        T = apply_boundary_conditions(T, boundary or {}, t)
    return T


def boundary_values(layout: TraceLayout, boundary, t=0.0):
    """Fixed-dof mask and values implied by the boundary specs, with net-flux correction."""
    mesh = layout.mesh
    n = layout.n_full
    fixed = np.zeros(n, dtype=bool)
    vals = np.zeros(n)
    dirichlet_edges = []
    for eid in mesh.boundary_edges():
        side = SIDES[mesh.edge_side[eid]]
        if side not in boundary:
            raise ValueError(f"boundary edge {eid} on side {side!r} has no boundary condition")
        bc = boundary[side]
        nodes = layout.edge_nodes(eid)
        x, y = layout.node_xy[nodes, 0], layout.node_xy[nodes, 1]
        horiz = mesh.edge_horizontal[eid]
        tang = (1, 0) if horiz else (0, 1)
        normal_comp = 1 if horiz else 0
        for fld in (3,):
            fixed[layout.dof(fld, nodes)] = True
        if bc.kind == "dirichlet":
            ux, uy = (np.broadcast_to(np.asarray(c, dtype=float), x.shape) for c in bc.u(x, y, t))
            for i, c in enumerate((ux, uy)):
                d = layout.dof(i, nodes)
                fixed[d] = True
                vals[d] = c
            dirichlet_edges.append(eid)
        else:
            d = layout.dof(normal_comp, nodes)
            fixed[d] = True
            vals[d] = 0.0
        if bc.kind in ("dirichlet", "mirror-tangential"):
            bx, by = (np.broadcast_to(np.asarray(c, dtype=float), x.shape) for c in bc.b(x, y, t))
            d = layout.dof(2, nodes)
            fixed[d] = True
            vals[d] = bx * tang[0] + by * tang[1]
    if dirichlet_edges:
        _correct_flux(layout, dirichlet_edges, vals)
    return fixed, vals


def _edge_weights(layout, eid):
    mesh, basis = layout.mesh, layout.basis
    e, f = mesh.edge_elems[eid][0]
    length = mesh.hx[e] if f in (0, 2) else mesh.hy[e]
    return 0.5 * length * (basis.wf @ basis.psi), length


def _correct_flux(layout, edges, vals):
    """Shift Dirichlet velocity by a constant normal so the net boundary flux vanishes."""
    mesh = layout.mesh
    flux, total = 0.0, 0.0
    info = []
    for eid in edges:
        e, f = mesh.edge_elems[eid][0]
        nrm = FACE_NORMALS[f]
        w, length = _edge_weights(layout, eid)
        nodes = layout.edge_nodes(eid)
        un = vals[layout.dof(0, nodes)] * nrm[0] + vals[layout.dof(1, nodes)] * nrm[1]
        flux += w @ un
        total += length
        info.append((nodes, nrm))
    c = flux / total
    for nodes, nrm in info:
        for i in range(2):
            vals[layout.dof(i, nodes)] -= c * nrm[i]


def apply_boundary_conditions(T: TraceSystem, boundary, t=0.0) -> TraceSystem:
    """Eliminate prescribed trace dofs (rows and columns removed, rhs lifted)."""
    layout = T.layout
    Kf = T.full_matrix if T.full_matrix is not None else T.matrix
    Ff = T.full_rhs if T.full_rhs is not None else T.rhs
    fixed, vals = boundary_values(layout, boundary, t)
    free = np.flatnonzero(~fixed)
    fix = np.flatnonzero(fixed)
    Kfree = Kf[free]
    K = Kfree[:, free].tocsr()
    K.sort_indices()
    rhs = Ff[free] - Kfree[:, fix] @ vals[fix]
    return TraceSystem(K, rhs, layout, free, vals, T.R, T.s, Kf, Ff, dict(T.meta))


# ---------------------------------------------------------------- reconstruction and checks

def reconstruct_volume(T: TraceSystem, x, shift_pressure=True):
    """Volume state from a trace solution; q shifted to zero global mean (rho moved alongside)."""
    layout = T.layout
    full = T.expand(np.asarray(x, dtype=float))
    loc = full[layout.l2g]
    vol = np.einsum("eij,ej->ei", T.R, loc) + T.s
    p = layout.basis.p
    state = VolumeState(vol.reshape(layout.n_el, N_VOL_FIELDS, (p + 1) ** 2), p)
    trace = TraceState(full, layout)
    if shift_pressure:
        c = pressure_mean(layout.mesh, layout.basis, state)
        state.coeffs[:, IQ] -= c
        o = 2 * layout.n_nodes
        full[o:o + layout.n_el] -= c
    return state, trace


def pressure_integral(mesh, basis, state):
    w = basis.wv @ basis.phi
    return float(np.sum((state.q @ w) * mesh.hx * mesh.hy / 4.0))


def pressure_mean(mesh, basis, state):
    x0, x1, y0, y1 = mesh.bounds
    return pressure_integral(mesh, basis, state) / ((x1 - x0) * (y1 - y0))


def element_flux(layout: TraceLayout, trace: TraceState):
    """Per-element net normal velocity flux through the element boundary."""
    mesh = layout.mesh
    out = np.zeros(layout.n_el)
    uh = trace.uhat
    for f in range(4):
        nrm = FACE_NORMALS[f]
        length = mesh.hx if f in (0, 2) else mesh.hy
        wk = layout.basis.wf @ layout.basis.psi
        nodes = mesh.elem_edges[:, f][:, None] * layout.P + np.arange(layout.P)[None, :]
        un = uh[nodes, 0] * nrm[0] + uh[nodes, 1] * nrm[1]
        out += 0.5 * length * (un @ wk)
    return out


def constraint_residuals(T: TraceSystem, state: VolumeState, trace: TraceState):
    """(max per-element flux / ||u^||, |(q, 1)|) after a solve."""
    flux = element_flux(T.layout, trace)
    un = max(np.linalg.norm(trace.uhat), 1e-300)
    return float(np.max(np.abs(flux)) / un), abs(pressure_integral(T.layout.mesh, T.layout.basis, state))


def local_residual(basis, params, mesh, picard, prev, dt, f, g, t, state, trace, chunk=256, face_avg=True):
    """Max-norm residual of the local equations for a reconstructed state.

    ``face_avg`` must match the setting used to assemble the solved system.
    """
    nv, _ = local_sizes(basis.p)
    layout = TraceLayout(mesh, basis)
    xq, yq = mesh.to_physical(basis.xi_q, basis.eta_q)
    w_all = np.concatenate([picard.u, picard.b], axis=1)
    wf_all = face_average(mesh, eval_faces(basis, w_all)) if face_avg else eval_faces(basis, w_all)
    worst = 0.0
    for lo in range(0, mesh.n_elements, chunk):
        sl = slice(lo, min(lo + chunk, mesh.n_elements))
        wq = eval_volume(basis, w_all[sl])
        wf = wf_all[sl]
        eb = ElementBatch(mesh.hx[sl], mesh.hy[sl], wq[:, :2], wq[:, 2:], wf[:, :, :2], wf[:, :, 2:],
                          _forcing(f, xq[sl], yq[sl], t), _forcing(g, xq[sl], yq[sl], t),
                          None if prev is None else prev.u[sl], None if prev is None else prev.b[sl])
        A, rhs = assemble_local(basis, params, eb, dt)
        z = np.concatenate([state.coeffs[sl].reshape(len(eb.hx), -1), trace.values[layout.l2g[sl]]], axis=1)
        res = np.einsum("eij,ej->ei", A[:, :nv], z) - rhs[:, :nv]
        worst = max(worst, float(np.max(np.abs(res))))
    return worst


# ---------------------------------------------------------------- errors

def compute_errors(mesh: QuadMesh, basis: BasisP, state: VolumeState, exact: dict, t=0.0, nq=None):
    """L2 errors per field. ``exact`` maps field names (u, b, L, q, J, r) to ``fn(x, y, t)``."""
    nq = basis.p + 3 if nq is None else nq
    xg, wg = np.polynomial.legendre.leggauss(nq)
    xi, eta = np.tile(xg, nq), np.repeat(xg, nq)
    W = np.kron(wg, wg)
    phi = basis.eval_at(xi, eta)
    x, y = mesh.to_physical(xi, eta)
    jac = (mesh.hx * mesh.hy / 4.0)[:, None]
    comps = {"u": [IU(0), IU(1)], "b": [IB(0), IB(1)], "L": [0, 1, 2, 3], "q": [IQ], "J": [IJ], "r": [IR]}
    out = {}
    for name, fn in exact.items():
        idx = comps[name]
        ex = fn(x, y, t)
        if len(idx) == 1 and not isinstance(ex, (tuple, list)):
            ex = (ex,)
        err = 0.0
        for c, e_c in zip(idx, ex):
            uh = state.coeffs[:, c] @ phi.T
            err += np.sum((uh - e_c) ** 2 * W[None, :] * jac)
        out[name] = float(np.sqrt(err))
    return out


def l2_norm(mesh, basis, coeffs):
    """L2 norm of (Nel, C, N) nodal fields."""
    vals = coeffs @ basis.phi.T
    jac = (mesh.hx * mesh.hy / 4.0)[:, None, None]
    return float(np.sqrt(np.sum(vals ** 2 * basis.wv[None, None, :] * jac)))
