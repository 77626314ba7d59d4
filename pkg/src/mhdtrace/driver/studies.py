"""Study harnesses shared by the command line and the acceptance tests."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
import math

import numpy as np

from ..hdg.system import compute_errors, l2_norm
from .linear import SolverConfig
from .picard import (
    Discretization,
    PicardConfig,
    PicardFailure,
    TimeConfig,
    TimeStepUnderflow,
    Trajectory,
    advance_time,
    picard_solve,
)
from .problems import ProblemSpec, island_problem

MMS_FIELDS = ("u", "b", "L", "q", "J", "r")


def observed_rates(errors, hs=None):
    """log2 ratios between consecutive errors (uniform halving when ``hs`` is None)."""
    errors = np.asarray(errors, dtype=float)
    if hs is None:
        return np.log2(errors[:-1] / errors[1:])
    hs = np.asarray(hs, dtype=float)
    return np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:])


def mms_study(problem: ProblemSpec, degrees, meshes, solver: SolverConfig, pcfg=PicardConfig()):
    """Steady manufactured-solution runs; returns one row per (p, n) with errors and rates."""
    rows = []
    for p in degrees:
        prev = None
        for n in meshes:
            disc = Discretization(problem, n, n, p)
            st0 = disc.initial_state()
            state, trace, stats = picard_solve(disc, st0, math.inf, 0.0, solver, pcfg)
            err = compute_errors(disc.mesh, disc.basis, state, problem.exact)
            row = {"p": p, "n": n, "h": 1.0 / n, "picard_iters": stats.iterations,
                   "converged": stats.converged and all(stats.linear_converged)}
            for k in MMS_FIELDS:
                row[f"err_{k}"] = err.get(k, float("nan"))
                row[f"rate_{k}"] = float(np.log2(prev[k] / err[k])) if prev and err[k] > 0 else float("nan")
            rows.append(row)
            prev = err
    return rows


def write_rows(path, rows, columns=None, fmt="{:.6e}"):
    """Plain CSV writer; floats are formatted with ``fmt``."""
    columns = columns or list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            out = []
            for c in columns:
                v = r.get(c, "")
                if isinstance(v, float):
                    v = "nan" if math.isnan(v) else fmt.format(v)
                out.append(v)
            w.writerow(out)


@dataclass
class RunSummary:
    label: str
    trajectory: Trajectory | None
    avg_linear: float = float("nan")
    avg_linear_excl_first: float = float("nan")
    avg_picard: float = float("nan")
    time_per_picard: float = float("nan")
    converged: bool = False
    u_norm: float = float("nan")
    error: str = ""
    extra: dict = field(default_factory=dict)

    def row(self, timings=True):
        it = f"{self.avg_linear:.2f}" + ("" if self.converged else "*")
        r = {"label": self.label, "avg_linear_iters": it,
             "avg_linear_iters_excl_first": f"{self.avg_linear_excl_first:.2f}",
             "avg_picard_iters": f"{self.avg_picard:.2f}", "u_norm": f"{self.u_norm:.6e}"}
        if timings:
            r["time_per_picard"] = f"{self.time_per_picard:.4f}"
        r.update(self.extra)
        return r


def transient_run(problem: ProblemSpec, nx, ny, p, solver: SolverConfig, tcfg: TimeConfig,
                  pcfg=PicardConfig(), label="", callback=None) -> RunSummary:
    disc = Discretization(problem, nx, ny, p)
    try:
        traj = advance_time(disc, disc.initial_state(), tcfg, solver, pcfg, callback=callback)
    except (PicardFailure, TimeStepUnderflow) as exc:
        return RunSummary(label, None, error=str(exc))
    u = traj.final_state.coeffs[:, 4:6]
    return RunSummary(
        label, traj,
        avg_linear=traj.avg_linear_per_picard(),
        avg_linear_excl_first=traj.avg_linear_per_picard(exclude_first=True),
        avg_picard=traj.avg_picard(),
        time_per_picard=traj.avg_time_per_picard(),
        converged=traj.all_linear_converged(),
        u_norm=l2_norm(disc.mesh, disc.basis, u),
    )


def robustness_study(lundquist, nx, ny, p, solver: SolverConfig, tcfg: TimeConfig,
                     pcfg=PicardConfig(), **island_kw):
    out = []
    for S in lundquist:
        pr = island_problem(S=S, **island_kw)
        s = transient_run(pr, nx, ny, p, solver, tcfg, pcfg, label=f"{S:g}")
        s.extra["S"] = f"{S:g}"
        out.append(s)
    return out


def compare_study(problem: ProblemSpec, nx, ny, p, solvers, tcfg: TimeConfig, pcfg=PicardConfig()):
    return [transient_run(problem, nx, ny, p, s, tcfg, pcfg, label=s.kind) for s in solvers]
