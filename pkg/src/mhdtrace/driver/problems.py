"""Benchmark problem library: manufactured solutions, island coalescence, HMKH, lid-driven cavity."""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
import sympy

from ..hdg.params import MhdParams
from ..hdg.system import BoundarySpec


@dataclass
class ProblemSpec:
    name: str
    bounds: tuple
    periodic: tuple
    boundary: dict
    params: MhdParams
    u0: object = None
    b0: object = None
    f: object = None
    g: object = None
    exact: dict | None = None
    linear_tol: float = 1e-6
    tol_is_relative: bool = True
    grading: float = 0.0
    extras: dict = field(default_factory=dict)


def _zero2(x, y, t=0.0):
    z = np.zeros(np.shape(x))
    return z, z.copy()


# ---------------------------------------------------------------- manufactured solutions

_x, _y, _t = sympy.symbols("x y t", real=True)


def _lamb(expr):
    fn = sympy.lambdify((_x, _y, _t), expr, modules="numpy")

    def call(x, y, t=0.0):
        return np.broadcast_to(np.asarray(fn(x, y, t), dtype=float), np.shape(x))
    return call


def _lamb_vec(exprs):
    fns = [_lamb(e) for e in exprs]

    def call(x, y, t=0.0):
        return tuple(fn(x, y, t) for fn in fns)
    return call


def mms_problem(u=None, b=None, q=None, params: MhdParams | None = None,
                bounds=(0.0, 1.0, 0.0, 1.0)) -> ProblemSpec:
    """Manufactured solution with forcings derived symbolically from the strong equations.

    ``u``, ``b`` are pairs and ``q`` a scalar of sympy expressions in x, y, t
    (or strings). Defaults are a steady solenoidal pair with a mean-zero
    pressure on the unit square. Dirichlet data come from the exact traces.
    """
    params = params or MhdParams(1.0, 1.0, 1.0)
    pi = sympy.pi
    if u is None:
        u = (sympy.sin(pi * _x) * sympy.cos(pi * _y), -sympy.cos(pi * _x) * sympy.sin(pi * _y))
    if b is None:
        b = (sympy.exp(_x) * sympy.cos(pi * _y), -sympy.exp(_x) * sympy.sin(pi * _y) / pi)
    if q is None:
        q = sympy.sin(pi * _x) * sympy.cos(pi * _y)
    loc = {"x": _x, "y": _y, "t": _t}
    u = [sympy.sympify(c, locals=loc) for c in u]
    b = [sympy.sympify(c, locals=loc) for c in b]
    q = sympy.sympify(q, locals=loc)
    for name, v in (("u", u), ("b", b)):
        div = sympy.simplify(sympy.diff(v[0], _x) + sympy.diff(v[1], _y))
        if div != 0:
            raise ValueError(f"manufactured {name} is not solenoidal: div = {div}")
    Re, Rm, kap = params.Re, params.Rm, params.kappa
    dx = lambda e: sympy.diff(e, _x)   # noqa: E731
    dy = lambda e: sympy.diff(e, _y)   # noqa: E731
    L = [dx(u[0]) / Re, dy(u[0]) / Re, dx(u[1]) / Re, dy(u[1]) / Re]
    curl_b = dx(b[1]) - dy(b[0])
    J = kap / Rm * curl_b
    lap = [dx(dx(c)) + dy(dy(c)) for c in u]
    f = [sympy.diff(u[i], _t) + u[0] * dx(u[i]) + u[1] * dy(u[i]) + (dx(q), dy(q))[i] - lap[i] / Re
         for i in range(2)]
    f[0] += kap * curl_b * b[1]
    f[1] += -kap * curl_b * b[0]
    ub = u[0] * b[1] - u[1] * b[0]
    g = [kap * sympy.diff(b[0], _t) - kap * dy(ub) + dy(J),
         kap * sympy.diff(b[1], _t) + kap * dx(ub) - dx(J)]
    f = [sympy.simplify(c) for c in f]
    g = [sympy.simplify(c) for c in g]
    u_fn, b_fn = _lamb_vec(u), _lamb_vec(b)
    exact = {
        "u": u_fn, "b": b_fn, "L": _lamb_vec(L), "q": _lamb(q), "J": _lamb(J),
        "r": lambda x, y, t=0.0: np.zeros(np.shape(x)),
    }
    bc = BoundarySpec("dirichlet", u=u_fn, b=b_fn)
    return ProblemSpec(
        "mms", tuple(bounds), (False, False), {s: bc for s in ("bottom", "right", "top", "left")},
        params, u0=u_fn, b0=b_fn, f=_lamb_vec(f), g=_lamb_vec(g), exact=exact,
        extras={"symbolic": {"u": u, "b": b, "q": q, "f": f, "g": g, "J": J}},
    )


# ---------------------------------------------------------------- island coalescence

def island_fields(eps=0.2, kappa=1.0, Rm=1.0):
    """Callables (b0, J0, g) of the island equilibrium."""
    tp = 2.0 * math.pi
    c = tp * kappa * (1.0 - eps ** 2) / Rm

    def den(x, y):
        return np.cosh(tp * y) + eps * np.cos(tp * x)

    def b0(x, y, t=0.0):
        D = den(x, y)
        return np.sinh(tp * y) / D, eps * np.sin(tp * x) / D

    def J0(x, y, t=0.0):
        return -c / den(x, y) ** 2

    def g(x, y, t=0.0):
        D3 = den(x, y) ** 3
        return 2.0 * tp * c * np.sinh(tp * y) / D3, 2.0 * tp * c * eps * np.sin(tp * x) / D3

    return b0, J0, g


def island_perturbation(sigma=1e-3):
    def db(x, y, t=0.0):
        return (sigma * 0.5 * math.pi * np.cos(math.pi * x) * np.sin(0.5 * math.pi * y),
                -sigma * math.pi * np.sin(math.pi * x) * np.cos(0.5 * math.pi * y))
    return db


def island_problem(eps_island=0.2, sigma=1e-3, S=1e3, kappa=1.0, grading=0.0) -> ProblemSpec:
    if S <= 0:
        raise ValueError("Lundquist number must be positive")
    params = MhdParams.from_lundquist(S, kappa)
    b_eq, J0, g = island_fields(eps_island, kappa, params.Rm)
    db = island_perturbation(sigma)

    def b0(x, y, t=0.0):
        bx, by = b_eq(x, y)
        px, py = db(x, y)
        return bx + px, by + py

    wall = BoundarySpec("mirror-conductor")
    return ProblemSpec(
        "island", (-1.0, 1.0, -1.0, 1.0), (True, False), {"bottom": wall, "top": wall},
        params, u0=_zero2, b0=b0, f=None, g=g, grading=grading,
        extras={"J0": J0, "b_equilibrium": b_eq, "perturbation": db, "eps": eps_island, "sigma": sigma},
    )


# ---------------------------------------------------------------- hydromagnetic Kelvin-Helmholtz

def hmkh_problem(B0=0.3333, delta=0.1, Re=1e4, Rm=1e4, kappa=1.0) -> ProblemSpec:
    params = MhdParams(Re, Rm, kappa)

    def u0(x, y, t=0.0):
        return np.where(np.asarray(y) >= 0.0, 1.0, -1.0) * np.ones(np.shape(x)), np.zeros(np.shape(x))

    def b0(x, y, t=0.0):
        return B0 * np.tanh(np.asarray(y) / delta) * np.ones(np.shape(x)), np.zeros(np.shape(x))

    wall = BoundarySpec("mirror-tangential", b=b0)
    return ProblemSpec(
        "hmkh", (0.0, 4.0, -2.0, 2.0), (True, False), {"bottom": wall, "top": wall},
        params, u0=u0, b0=b0, linear_tol=1e-9, tol_is_relative=False,
        extras={"B0": B0, "delta": delta, "alfven_mach": 1.0 / B0},
    )


# ---------------------------------------------------------------- lid-driven cavity

def cavity_problem(Re=1000.0, Rm=1000.0, kappa=1.0) -> ProblemSpec:
    params = MhdParams(Re, Rm, kappa)
    top = 0.5

    def u_wall(x, y, t=0.0):
        # lid value wins at the two top corners
        lid = np.isclose(np.asarray(y, dtype=float), top)
        return np.where(lid, 1.0, 0.0) * np.ones(np.shape(x)), np.zeros(np.shape(x))

    def b_wall(x, y, t=0.0):
        return -np.ones(np.shape(x)), np.zeros(np.shape(x))

    wall = BoundarySpec("dirichlet", u=u_wall, b=b_wall)
    return ProblemSpec(
        "cavity", (-0.5, 0.5, -0.5, 0.5), (False, False),
        {s: wall for s in ("bottom", "right", "top", "left")}, params, u0=_zero2, b0=_zero2,
        extras={"Ha": params.Ha},
    )


PROBLEMS = {"mms": mms_problem, "island": island_problem, "hmkh": hmkh_problem, "cavity": cavity_problem}
