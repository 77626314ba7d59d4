"""Non-restarted GMRES and flexible GMRES with right preconditioning."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Preconditioner",
    "IdentityPreconditioner",
    "as_operator",
    "as_preconditioner",
    "IterationHistory",
    "KrylovBreakdown",
    "gmres",
    "fgmres",
    "write_history_csv",
]

REORTH_THRESHOLD = 1e-8


class KrylovBreakdown(ArithmeticError):
    pass


class Preconditioner:
    """Right-preconditioner interface: ``apply(r)`` approximates ``A^{-1} r``.

    ``variable`` is True when the action may change between calls (inner
    Krylov iterations); such preconditioners need FGMRES.
    """

    variable = False

    def apply(self, r):
        raise NotImplementedError

    def __call__(self, r):
        return self.apply(r)


class IdentityPreconditioner(Preconditioner):
    def apply(self, r):
        return np.array(r, dtype=float, copy=True)


class _CallablePreconditioner(Preconditioner):
    def __init__(self, fn, variable=False):
        self._fn = fn
        self.variable = variable

    def apply(self, r):
        return self._fn(r)


def as_preconditioner(M, variable=False) -> Preconditioner:
    if M is None:
        return IdentityPreconditioner()
    if isinstance(M, Preconditioner):
        return M
    if hasattr(M, "apply"):
        return _CallablePreconditioner(M.apply, getattr(M, "variable", variable))
    if callable(M):
        return _CallablePreconditioner(M, variable)
    return _CallablePreconditioner(lambda r: M @ r, False)


def as_operator(A):
    if callable(A) and not hasattr(A, "shape"):
        return A
    if hasattr(A, "matvec"):
        return A.matvec
    return lambda x: A @ x


@dataclass
class IterationHistory:
    """Relative residual norms ``||r_k|| / ||b||``, entry 0 being the initial residual."""

    residuals: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return max(len(self.residuals) - 1, 0)

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else 0.0

    def csv_rows(self, solve_id):
        return [(solve_id, k, r) for k, r in enumerate(self.residuals)]


def write_history_csv(path, histories) -> None:
    """Write ``{solve_id: IterationHistory}`` as rows (solve_id, iter, relres)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["solve_id", "iter", "relres"])
        for sid, h in histories.items():
            w.writerows(h.csv_rows(sid))


def _givens(a, b):
    if b == 0.0:
        return 1.0, 0.0
    r = np.hypot(a, b)
    return a / r, b / r


def _arnoldi(A, M, b, x0, tol, tol_is_relative, maxit, flexible):
    A = as_operator(A)
    M = as_preconditioner(M)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float, copy=True)
    if bnorm == 0.0:
        return np.zeros(n), IterationHistory([0.0], True)
    r = b - A(x) if x0 is not None else b.copy()
    beta = np.linalg.norm(r)
    target = tol * bnorm if tol_is_relative else tol
    hist = IterationHistory([beta / bnorm], False)
    if beta <= target:
        hist.converged = True
        return x, hist

    V = np.empty((maxit + 1, n))
    Z = np.empty((maxit, n)) if flexible else None
    H = np.zeros((maxit + 1, maxit))
    cs = np.zeros(maxit)
    sn = np.zeros(maxit)
    g = np.zeros(maxit + 1)
    V[0] = r / beta
    g[0] = beta
    k = 0
    for j in range(maxit):
        z = M.apply(V[j])
        if flexible:
            Z[j] = z
        w = np.asarray(A(z), dtype=float)
        wnorm0 = np.linalg.norm(w)
        for i in range(j + 1):
            h = V[i] @ w
            H[i, j] = h
            w -= h * V[i]
        wnorm = np.linalg.norm(w)
        if wnorm > 0.0 and np.max(np.abs(V[: j + 1] @ w)) > REORTH_THRESHOLD * wnorm:
            for i in range(j + 1):
                h = V[i] @ w
                H[i, j] += h
                w -= h * V[i]
            wnorm = np.linalg.norm(w)
        if not (np.isfinite(wnorm) and np.all(np.isfinite(H[: j + 1, j]))):
            raise KrylovBreakdown(f"non-finite value in Krylov basis at iteration {j + 1}")
        H[j + 1, j] = wnorm
        for i in range(j):
            hi, hi1 = H[i, j], H[i + 1, j]
            H[i, j] = cs[i] * hi + sn[i] * hi1
            H[i + 1, j] = -sn[i] * hi + cs[i] * hi1
        cs[j], sn[j] = _givens(H[j, j], H[j + 1, j])
        H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        k = j + 1
        res = abs(g[j + 1])
        happy = wnorm <= 1e-14 * max(wnorm0, 1e-300)
        if happy:
            res = 0.0
        hist.residuals.append(res / bnorm)
        if res <= target or happy:
            hist.converged = True
            break
        V[j + 1] = w / wnorm

    if k == 0:
        return x, hist
    y = _back_substitute(H[:k, :k], g[:k])
    if flexible:
        x += Z[:k].T @ y
    else:
        x += M.apply(V[:k].T @ y)
    return x, hist


def _back_substitute(R, g):
    k = len(g)
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        y[i] = (g[i] - R[i, i + 1:] @ y[i + 1:]) / R[i, i]
    return y


def gmres(A, b, M=None, tol=1e-6, tol_is_relative=True, maxit=200, x0=None):
    """Right-preconditioned, non-restarted GMRES (Arnoldi + Givens rotations).

    Stops when ``||b - A x|| <= tol * ||b||`` (or ``<= tol`` when
    ``tol_is_relative`` is False). ``M`` must be a fixed linear map; use
    :func:`fgmres` for variable preconditioners. Returns ``(x, history)``;
    after ``maxit`` steps the minimal-residual iterate is returned with
    ``history.converged = False``.
    """
    Mp = as_preconditioner(M)
    if Mp.variable:
        raise ValueError("GMRES needs a fixed preconditioner; use fgmres")
    return _arnoldi(A, Mp, b, x0, tol, tol_is_relative, maxit, flexible=False)


def fgmres(A, b, M=None, tol=1e-6, tol_is_relative=True, maxit=200, x0=None):
    """Flexible GMRES: stores the preconditioned directions so ``M`` may vary per step."""
    return _arnoldi(A, M, b, x0, tol, tol_is_relative, maxit, flexible=True)
