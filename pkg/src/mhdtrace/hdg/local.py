"""Element-local HDG operators and static condensation.

Local volume unknowns per element, each with N = (p+1)^2 nodal coefficients:
L11, L12, L21, L22, u1, u2, q, J, b1, b2, r. Local trace unknowns: for each
face (bottom, right, top, left) the fields (u1^, u2^, bt^, r^) with p+1 nodes
each, followed by the element pressure average rho.

All routines work on a batch of E elements at once.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..sparse import SingularMatrixError
from .basis import FACE_NORMALS, FACE_SIGNS, FACE_TANGENTS, BasisP
from .params import MhdParams, stabilization

N_VOL_FIELDS = 11
N_TRACE_FIELDS = 4
VOL_NAMES = ("L11", "L12", "L21", "L22", "u1", "u2", "q", "J", "b1", "b2", "r")
IL = lambda i, j: 2 * i + j      # noqa: E731
IU = lambda i: 4 + i             # noqa: E731
IQ, IJ, IR = 6, 7, 10
IB = lambda i: 8 + i             # noqa: E731


def local_sizes(p):
    N = (p + 1) ** 2
    return N_VOL_FIELDS * N, 4 * N_TRACE_FIELDS * (p + 1) + 1


@dataclass
class ElementBatch:
    """Geometry and frozen fields for a batch of elements.

    ``w_q``/``d_q``: (E, 2, nq^2) at volume quadrature; ``w_f``/``d_f``:
    (E, 4, 2, nq) at face quadrature; ``f_q``/``g_q``: forcing at volume
    quadrature; ``u_prev``/``b_prev``: (E, 2, N) previous-time coefficients.
    """

    hx: np.ndarray
    hy: np.ndarray
    w_q: np.ndarray
    d_q: np.ndarray
    w_f: np.ndarray
    d_f: np.ndarray
    f_q: np.ndarray | None = None
    g_q: np.ndarray | None = None
    u_prev: np.ndarray | None = None
    b_prev: np.ndarray | None = None


def assemble_local(basis: BasisP, params: MhdParams, eb: ElementBatch, dt=np.inf):
    """Dense local matrices (E, n, n) and right-hand sides (E, n) with n = n_vol + n_trace.

    Rows ordered as the unknowns: the first n_vol rows are the local
    equations, the trace rows are the element's contributions to the
    conservation equations and the final row is the pressure-average constraint.
    """
    Bs = basis
    N, P = Bs.N, Bs.P
    E = len(eb.hx)
    nv, nt = local_sizes(Bs.p)
    n = nv + nt
    A = np.zeros((E, n, n))
    rhs = np.zeros((E, n))
    Re, Rm, kap, xi = params.Re, params.Rm, params.kappa, params.xi
    bn, bt = params.beta_n, params.beta_t
    steady = not np.isfinite(dt)

    def V(k):
        return slice(k * N, (k + 1) * N)

    def T(f, g):
        o = nv + (N_TRACE_FIELDS * f + g) * P
        return slice(o, o + P)

    RHO = n - 1

    def add(r, c, X):
        A[:, r, c] += X

    hx, hy = eb.hx, eb.hy
    Wv = Bs.wv[None, :] * (hx * hy / 4.0)[:, None]
    phi, dxi, deta = Bs.phi, Bs.dxi, Bs.deta
    sx = (2.0 / hx)[:, None, None]
    sy = (2.0 / hy)[:, None, None]

    def vmass(c=None):
        W = Wv if c is None else Wv * c
        return np.einsum("eq,qa,qb->eab", W, phi, phi, optimize=True)

    def vder(axis, c=None):
        W = Wv if c is None else Wv * c
        if axis == 0:
            return sx * np.einsum("eq,qa,qb->eab", W, phi, dxi, optimize=True)
        return sy * np.einsum("eq,qa,qb->eab", W, phi, deta, optimize=True)

    def tr(X):
        return np.swapaxes(X, 1, 2)

    M = vmass()
    D = [vder(0), vder(1)]
    w1, w2 = eb.w_q[:, 0], eb.w_q[:, 1]
    d1, d2 = eb.d_q[:, 0], eb.d_q[:, 1]
    Cw = (sx * np.einsum("eq,qa,qb->eab", Wv * w1, phi, dxi, optimize=True)
          + sy * np.einsum("eq,qa,qb->eab", Wv * w2, phi, deta, optimize=True))
    Dd = {(ax, k): vder(ax, c) for ax in (0, 1) for k, c in ((1, d1), (2, d2))}

    # (a) velocity gradient
    for i in range(2):
        for j in range(2):
            add(V(IL(i, j)), V(IL(i, j)), Re * M)
            add(V(IL(i, j)), V(IU(i)), tr(D[j]))
    # (b) momentum
    skew = 0.5 * (Cw - tr(Cw))
    for i in range(2):
        add(V(IU(i)), V(IU(i)), skew + (0.0 if steady else M / dt))
        for j in range(2):
            add(V(IU(i)), V(IL(i, j)), -D[j])
        add(V(IU(i)), V(IQ), D[i])
    add(V(IU(0)), V(IB(1)), kap * Dd[0, 2])
    add(V(IU(0)), V(IB(0)), -kap * Dd[1, 2])
    add(V(IU(1)), V(IB(1)), -kap * Dd[0, 1])
    add(V(IU(1)), V(IB(0)), kap * Dd[1, 1])
    # (c) continuity (volume part)
    for i in range(2):
        add(V(IQ), V(IU(i)), -tr(D[i]))
    # (d) current
    add(V(IJ), V(IJ), (Rm / kap) * M)
    add(V(IJ), V(IB(0)), -tr(D[1]))
    add(V(IJ), V(IB(1)), tr(D[0]))
    # (e) induction
    for i in range(2):
        if not steady:
            add(V(IB(i)), V(IB(i)), kap * M / dt)
        add(V(IB(i)), V(IR), -tr(D[i]))
    add(V(IB(0)), V(IJ), D[1])
    add(V(IB(1)), V(IJ), -D[0])
    add(V(IB(0)), V(IU(0)), kap * tr(Dd[1, 2]))
    add(V(IB(0)), V(IU(1)), -kap * tr(Dd[1, 1]))
    add(V(IB(1)), V(IU(0)), -kap * tr(Dd[0, 2]))
    add(V(IB(1)), V(IU(1)), kap * tr(Dd[0, 1]))
    # (f) magnetic divergence
    for i in range(2):
        add(V(IR), V(IB(i)), D[i])

    # face terms
    perim = 2.0 * (hx + hy)
    m = np.zeros((E, N))
    e_f = []
    for f in range(4):
        flen = hx if f in (0, 2) else hy
        Wf = Bs.wf[None, :] * (flen / 2.0)[:, None]
        pf, ps = Bs.phif[f], Bs.psi
        m += np.einsum("eq,qa->ea", Wf, pf)
        e_f.append(np.einsum("eq,qk->ek", Wf, ps))
    for f in range(4):
        flen = hx if f in (0, 2) else hy
        Wf = Bs.wf[None, :] * (flen / 2.0)[:, None]
        pf, ps = Bs.phif[f], Bs.psi
        nrm, tng, sf = FACE_NORMALS[f], FACE_TANGENTS[f], FACE_SIGNS[f]
        nu = (-nrm[1], nrm[0])

        def Mff(c=None):
            W = Wf if c is None else Wf * c
            return np.einsum("eq,qa,qb->eab", W, pf, pf, optimize=True)

        def Ef(c=None):
            W = Wf if c is None else Wf * c
            return np.einsum("eq,qa,qk->eak", W, pf, ps, optimize=True)

        def Mh(c=None):
            W = Wf if c is None else Wf * c
            return np.einsum("eq,qk,ql->ekl", W, ps, ps, optimize=True)

        wf1, wf2 = eb.w_f[:, f, 0], eb.w_f[:, f, 1]
        df1, df2 = eb.d_f[:, f, 0], eb.d_f[:, f, 1]
        wn = wf1 * nrm[0] + wf2 * nrm[1]
        tau_t, tau_n = stabilization(wn)
        S = [[tau_t * ((i == k) - nrm[i] * nrm[k]) + tau_n * nrm[i] * nrm[k] for k in range(2)]
             for i in range(2)]
        E0, Mf0, Mh0 = Ef(), Mff(), Mh()
        Ewn = Ef(0.5 * wn)
        Ed1, Ed2 = Ef(df1), Ef(df2)
        Md1, Md2 = Mff(df1), Mff(df2)
        chi = [kap * df2, -kap * df1]
        chi_p = [df2, -df1]

        # (a)
        for i in range(2):
            for j in range(2):
                if nrm[j]:
                    add(V(IL(i, j)), T(f, i), -nrm[j] * E0)
        # (b)
        for i in range(2):
            add(V(IU(i)), T(f, i), Ewn)
            for k in range(2):
                add(V(IU(i)), V(IU(k)), Mff(S[i][k]))
                add(V(IU(i)), T(f, k), -Ef(S[i][k]))
            Mchi = Mff(chi[i])
            if nrm[0]:
                add(V(IU(i)), V(IB(1)), -(1 - xi) * nrm[0] * Mchi)
            if nrm[1]:
                add(V(IU(i)), V(IB(0)), (1 - xi) * nrm[1] * Mchi)
            add(V(IU(i)), T(f, 2), (1 - xi) * sf * Ef(chi[i]))
        # (c)
        for i in range(2):
            if nrm[i]:
                add(V(IQ), T(f, i), nrm[i] * (E0 - np.einsum("ea,ek->eak", m, e_f[f]) / perim[:, None, None]))
        # (d)
        add(V(IJ), T(f, 2), -sf * E0)
        # (e)
        for i in range(2):
            if nrm[i]:
                add(V(IB(i)), T(f, 3), nrm[i] * E0)
            if nu[i]:
                add(V(IB(i)), V(IU(0)), (1 - xi) * kap * nu[i] * Md2)
                add(V(IB(i)), V(IU(1)), -(1 - xi) * kap * nu[i] * Md1)
                add(V(IB(i)), T(f, 0), xi * kap * nu[i] * Ed2)
                add(V(IB(i)), T(f, 1), -xi * kap * nu[i] * Ed1)
            for k in range(2):
                Tik = (i == k) - nrm[i] * nrm[k]
                if Tik:
                    add(V(IB(i)), V(IB(k)), bt * Tik * Mf0)
            if tng[i]:
                add(V(IB(i)), T(f, 2), -bt * tng[i] * E0)
        # (f)
        add(V(IR), V(IR), Mf0 / bn)
        add(V(IR), T(f, 3), -E0 / bn)

        # conservation rows: velocity
        for i in range(2):
            for j in range(2):
                if nrm[j]:
                    add(T(f, i), V(IL(i, j)), nrm[j] * tr(E0))
            if nrm[i]:
                add(T(f, i), V(IQ), -nrm[i] * tr(E0))
            add(T(f, i), V(IU(i)), -tr(Ewn))
            for k in range(2):
                add(T(f, i), V(IU(k)), -tr(Ef(S[i][k])))
                add(T(f, i), T(f, k), Mh(S[i][k]))
            Echi = tr(Ef(chi_p[i]))
            if nrm[0]:
                add(T(f, i), V(IB(1)), -kap * xi * nrm[0] * Echi)
            if nrm[1]:
                add(T(f, i), V(IB(0)), kap * xi * nrm[1] * Echi)
        # tangential magnetic
        add(T(f, 2), V(IJ), sf * tr(E0))
        for k in range(2):
            if tng[k]:
                add(T(f, 2), V(IB(k)), -bt * tng[k] * tr(E0))
        add(T(f, 2), T(f, 2), bt * Mh0)
        add(T(f, 2), V(IU(0)), -sf * (1 - xi) * kap * tr(Ed2))
        add(T(f, 2), V(IU(1)), sf * (1 - xi) * kap * tr(Ed1))
        # normal magnetic / multiplier
        for i in range(2):
            if nrm[i]:
                add(T(f, 3), V(IB(i)), -nrm[i] * tr(E0))
        add(T(f, 3), V(IR), -tr(E0) / bn)
        add(T(f, 3), T(f, 3), Mh0 / bn)
        # pressure-average constraint
        for i in range(2):
            if nrm[i]:
                A[:, RHO, T(f, i)] += nrm[i] * e_f[f]

    add(V(IQ), V(IQ), np.einsum("ea,eb->eab", m, m) / perim[:, None, None])
    A[:, V(IQ), RHO] += -m

    # right-hand side
    if eb.f_q is not None:
        for i in range(2):
            rhs[:, V(IU(i))] += np.einsum("eq,qa->ea", Wv * eb.f_q[:, i], phi)
    if eb.g_q is not None:
        for i in range(2):
            rhs[:, V(IB(i))] += np.einsum("eq,qa->ea", Wv * eb.g_q[:, i], phi)
    if not steady:
        if eb.u_prev is not None:
            for i in range(2):
                rhs[:, V(IU(i))] += np.einsum("eab,eb->ea", M, eb.u_prev[:, i]) / dt
        if eb.b_prev is not None:
            for i in range(2):
                rhs[:, V(IB(i))] += kap * np.einsum("eab,eb->ea", M, eb.b_prev[:, i]) / dt
    return A, rhs


def static_condense(A, rhs, n_vol):
    """Eliminate the volume unknowns of a batch of local systems.

    Returns ``(K, F, R, s)``: condensed trace matrices and right-hand sides,
    and the affine reconstruction ``vol = R @ trace + s``.
    """
    A = np.asarray(A, dtype=float)
    single = A.ndim == 2
    if single:
        A, rhs = A[None], np.asarray(rhs)[None]
    Avv = A[:, :n_vol, :n_vol]
    Avt = A[:, :n_vol, n_vol:]
    Atv = A[:, n_vol:, :n_vol]
    Att = A[:, n_vol:, n_vol:]
    rhs_v = rhs[:, :n_vol, None]
    try:
        X = np.linalg.solve(Avv, np.concatenate([Avt, rhs_v], axis=2))
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"singular local volume matrix: {exc}") from exc
    if not np.all(np.isfinite(X)):
        raise SingularMatrixError("non-finite local solve")
    R = -X[:, :, :-1]
    s = X[:, :, -1]
    K = Att + Atv @ R
    F = rhs[:, n_vol:] - np.einsum("eij,ej->ei", Atv, s)
    if single:
        return K[0], F[0], R[0], s[0]
    return K, F, R, s
