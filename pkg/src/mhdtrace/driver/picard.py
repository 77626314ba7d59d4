"""Picard iteration and adaptive backward-Euler time stepping."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
import logging
import time

import numpy as np

from ..hdg.basis import BasisP
from ..hdg.mesh import QuadMesh, build_mesh
from ..hdg.system import (
    VolumeState,
    assemble_trace_system,
    constraint_residuals,
    project,
    reconstruct_volume,
)
from .linear import SolverConfig, solve_trace
from .problems import ProblemSpec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PicardConfig:
    eps_a: float = 1e-6
    eps_r: float = 1e-4
    max_picard: int = 20
    diverge_after: int = 3

    def __post_init__(self):
        if self.eps_a < 0 or self.eps_r < 0 or self.eps_a + self.eps_r <= 0:
            raise ValueError("Picard tolerances must be positive")


@dataclass(frozen=True)
class TimeConfig:
    dt0: float = 0.05
    t_end: float | None = None
    steps: int | None = None
    adaptive: bool = True
    dt_min: float = 1e-8

    def __post_init__(self):
        if self.dt0 <= 0:
            raise ValueError("dt0 must be positive")


class PicardFailure(RuntimeError):
    pass


class TimeStepUnderflow(RuntimeError):
    pass


def picard_metric(delta, current, cfg: PicardConfig = PicardConfig()):
    """sqrt(mean((|d_i| / (eps_r |x_i| + eps_a))^2)); converged when < 1."""
    delta = np.asarray(delta, dtype=float).ravel()
    current = np.asarray(current, dtype=float).ravel()
    if delta.shape != current.shape:
        raise ValueError("update and state vectors differ in length")
    if delta.size == 0:
        return 0.0
    z = np.abs(delta) / (cfg.eps_r * np.abs(current) + cfg.eps_a)
    return float(np.sqrt(np.mean(z * z)))


@dataclass
class PicardStats:
    metrics: list = field(default_factory=list)
    linear_iters: list = field(default_factory=list)
    linear_converged: list = field(default_factory=list)
    times: list = field(default_factory=list)
    constraint: list = field(default_factory=list)
    histories: list = field(default_factory=list)
    converged: bool = False
    diverging: bool = False

    @property
    def iterations(self):
        return len(self.metrics)


class Discretization:
    """Mesh, basis and problem bundled for repeated assembly."""

    def __init__(self, problem: ProblemSpec, nx, ny, p):
        self.problem = problem
        self.mesh: QuadMesh = build_mesh(nx, ny, problem.bounds, problem.periodic, problem.grading)
        self.basis = BasisP(p)
        self.p = p

    def initial_state(self, t=0.0) -> VolumeState:
        st = VolumeState.zeros(self.mesh.n_elements, self.p)
        pr = self.problem
        if pr.u0 is not None:
            st.coeffs[:, 4:6] = project(self.mesh, self.basis, pr.u0, t)
        if pr.b0 is not None:
            st.coeffs[:, 8:10] = project(self.mesh, self.basis, pr.b0, t)
        return st

    def assemble(self, picard, dt, prev, t):
        pr = self.problem
        return assemble_trace_system(self.mesh, self.basis, pr.params, picard, dt, prev,
                                     pr.boundary, pr.f, pr.g, t)


def picard_solve(disc: Discretization, prev: VolumeState, dt, t, solver: SolverConfig,
                 cfg: PicardConfig = PicardConfig(), guess: VolumeState | None = None):
    """Picard loop for one backward-Euler step (``dt = inf`` for steady problems).

    Returns ``(volume, trace, stats)``; ``stats.converged`` tells whether the
    update metric dropped below one within ``cfg.max_picard`` iterations.
    """
    cur = (guess or prev).copy()
    cur_trace = None
    stats = PicardStats()
    growing = 0
    trace = None
    for k in range(cfg.max_picard):
        t0 = time.perf_counter()
        T = disc.assemble(cur, dt, prev if np.isfinite(dt) else None, t)
        res = solve_trace(T, solver)
        if not np.all(np.isfinite(res.x)):
            raise PicardFailure("non-finite linear solution")
        new, trace = reconstruct_volume(T, res.x)
        stats.times.append(time.perf_counter() - t0)
        stats.linear_iters.append(res.iterations)
        stats.linear_converged.append(res.converged)
        stats.histories.append(res.history)
        stats.constraint.append(constraint_residuals(T, new, trace))
        old_trace = cur_trace if cur_trace is not None else np.zeros_like(trace.values)
        x_new = np.concatenate([new.ravel(), trace.values])
        x_old = np.concatenate([cur.ravel(), old_trace])
        m = picard_metric(x_new - x_old, x_new, cfg)
        growing = growing + 1 if stats.metrics and m > stats.metrics[-1] else 0
        stats.metrics.append(m)
        log.debug("picard %d: metric %.3e, linear iters %d", k + 1, m, res.iterations)
        cur, cur_trace = new, trace.values
        if m < 1.0:
            stats.converged = True
            break
        if growing >= cfg.diverge_after:
            stats.diverging = True
            break
    return cur, trace, stats


@dataclass
class StepRecord:
    step: int
    t: float
    dt: float
    picard_iters: int
    linear_iters: list
    wall_time: float
    attempts: int = 1

    @property
    def avg_linear_iters(self):
        return float(np.mean(self.linear_iters)) if self.linear_iters else 0.0

    @property
    def avg_linear_iters_excl_first(self):
        it = self.linear_iters[1:] if self.step == 1 else self.linear_iters
        return float(np.mean(it)) if it else float("nan")


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    dts: list = field(default_factory=list)
    stats: list = field(default_factory=list)
    final_state: VolumeState | None = None
    final_trace: object = None

    def avg_linear_per_picard(self, exclude_first=False):
        its = [i for r in self.records for i in r.linear_iters]
        if exclude_first and its:
            its = its[1:]
        return float(np.mean(its)) if its else float("nan")

    def avg_picard(self):
        return float(np.mean([r.picard_iters for r in self.records])) if self.records else float("nan")

    def avg_time_per_picard(self):
        n = sum(r.picard_iters for r in self.records)
        return sum(r.wall_time for r in self.records) / n if n else float("nan")

    def all_linear_converged(self):
        return all(all(s.linear_converged) for s in self.stats)

    def write_csv(self, path, timings=True):
        """One row per accepted step; ``timings=False`` drops the wall-time column."""
        head = ["step", "t", "dt", "picard_iters", "avg_linear_iters", "avg_linear_iters_excl_first"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head + (["wall_time"] if timings else []))
            for r in self.records:
                row = [r.step, f"{r.t:.10g}", f"{r.dt:.10g}", r.picard_iters,
                       f"{r.avg_linear_iters:.4f}", f"{r.avg_linear_iters_excl_first:.4f}"]
                if timings:
                    row.append(f"{r.wall_time:.4f}")
                w.writerow(row)


def advance_time(disc: Discretization, state: VolumeState, tcfg: TimeConfig, solver: SolverConfig,
                 pcfg: PicardConfig = PicardConfig(), t0=0.0, step_fn=None, callback=None) -> Trajectory:
    """Backward Euler with step halving on Picard failure; dt is never increased.

    ``step_fn`` replaces :func:`picard_solve` (same signature), which lets
    tests inject failures.
    """
    if tcfg.steps is None and tcfg.t_end is None:
        raise ValueError("need steps or t_end")
    step_fn = step_fn or picard_solve
    traj = Trajectory()
    dt = tcfg.dt0
    t = t0
    step = 0
    trace = None
    while True:
        if tcfg.steps is not None and step >= tcfg.steps:
            break
        if tcfg.t_end is not None and t >= tcfg.t_end - 1e-12:
            break
        attempts = 0
        wall = 0.0
        while True:
            attempts += 1
            traj.dts.append(dt)
            t1 = time.perf_counter()
            try:
                new, trace, stats = step_fn(disc, state, dt, t + dt, solver, pcfg)
                ok = stats.converged
            except (PicardFailure, ArithmeticError) as exc:
                log.info("step failed at dt=%g: %s", dt, exc)
                ok, stats = False, None
            wall += time.perf_counter() - t1
            if ok:
                break
            if not tcfg.adaptive:
                raise PicardFailure(f"Picard iteration failed at t={t + dt:g} with dt={dt:g}")
            dt *= 0.5
            if dt < tcfg.dt_min:
                raise TimeStepUnderflow(f"time step fell below {tcfg.dt_min:g} at t={t:g}")
            log.info("halving time step to %g", dt)
        step += 1
        t += dt
        state = new
        traj.records.append(StepRecord(step, t, dt, stats.iterations, list(stats.linear_iters), wall, attempts))
        traj.stats.append(stats)
        if callback is not None:
            callback(step, t, state, trace)
    traj.final_state, traj.final_trace = state, trace
    return traj
