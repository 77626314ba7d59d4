"""Command-line front end.

    mhdtrace <subcommand> [--config FILE] [--key value ...]

Subcommands: ``mms`` (convergence table), ``solve`` (single steady or
transient run), ``robustness`` (Lundquist sweep on the island problem),
``compare`` (several preconditioners on one problem) and ``generic``
(Matrix Market matrix, optional right-hand side, block sizes).

Every run writes ``manifest.json`` into the output directory:

    {"subcommand": str, "config": {...resolved RunConfig...},
     "versions": {"mhdtrace", "python", "numpy", "scipy"},
     "artifacts": [file names], "status": "ok" | "failed", "messages": [str]}
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import platform
import sys

import numpy as np
import scipy

from . import __version__
from .amg import AmgConfig, SmootherConfig
from .blockprec import Ilu0Richardson, make_block_preconditioner, saddle_from_matrix
from .config import ConfigError, RunConfig, parse_config
from .driver.linear import SolverConfig
from .driver.picard import Discretization, PicardConfig, TimeConfig, picard_solve
from .driver.problems import cavity_problem, hmkh_problem, island_problem, mms_problem
from .driver.studies import MMS_FIELDS, compare_study, mms_study, robustness_study, transient_run, write_rows
from .hdg.params import MhdParams
from .hdg.system import l2_norm
from .hdg.vtk import write_vtk
from .krylov import fgmres, gmres, write_history_csv
from .sparse import read_matrix_market, sparse_lu_factor

log = logging.getLogger("mhdtrace")

SUBCOMMANDS = ("mms", "solve", "robustness", "compare", "generic")


# ---------------------------------------------------------------- config -> objects

def build_problem(cfg: RunConfig):
    if cfg.problem == "mms":
        params = MhdParams(cfg.Re or 1.0, cfg.Rm or 1.0, cfg.kappa or 1.0)
        return mms_problem(params=params)
    if cfg.problem == "island":
        return island_problem(cfg.eps_island, cfg.sigma, cfg.S or 1e3, cfg.kappa or 1.0, cfg.grading)
    if cfg.problem == "hmkh":
        return hmkh_problem(Re=cfg.Re or cfg.S or 1e4, Rm=cfg.Rm or cfg.S or 1e4, kappa=cfg.kappa or 1.0)
    if cfg.problem == "cavity":
        return cavity_problem(Re=cfg.Re or 1000.0, Rm=cfg.Rm or 1000.0, kappa=cfg.kappa or 1.0)
    raise ConfigError(f"problem {cfg.problem!r} has no PDE setup")


def build_solver(cfg: RunConfig, kind=None) -> SolverConfig:
    kind = kind or cfg.precond
    smoother = cfg.smoother or ("ilu0" if kind == "bfbt-amg-ilu0" else "gmres-ilu0")
    amg = AmgConfig(SmootherConfig(smoother, cfg.smoother_steps), cfg.pre_steps, cfg.post_steps,
                    cfg.coarse_threshold)
    return SolverConfig(kind, cfg.tol, cfg.tol_is_relative, cfg.maxit, amg, cfg.dd_steps, cfg.outer)


def build_picard(cfg: RunConfig) -> PicardConfig:
    return PicardConfig(cfg.eps_a, cfg.eps_r, cfg.max_picard)


def build_time(cfg: RunConfig) -> TimeConfig:
    steps = cfg.steps if cfg.t_end is None or "steps" in cfg.explicit else None
    return TimeConfig(cfg.dt, cfg.t_end, steps, cfg.adaptive)


# ---------------------------------------------------------------- subcommands

class _Run:
    def __init__(self, name, cfg: RunConfig):
        self.name, self.cfg = name, cfg
        self.out = cfg.output_dir
        os.makedirs(self.out, exist_ok=True)
        self.artifacts = []
        self.messages = []
        self.ok = True

    def path(self, fname):
        self.artifacts.append(fname)
        return os.path.join(self.out, fname)

    def fail(self, msg):
        self.ok = False
        self.messages.append(msg)
        log.error(msg)

    def manifest(self):
        data = {
            "subcommand": self.name,
            "config": self.cfg.as_dict(),
            "versions": {"mhdtrace": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "artifacts": sorted(self.artifacts),
            "status": "ok" if self.ok else "failed",
            "messages": self.messages,
        }
        with open(os.path.join(self.out, "manifest.json"), "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True, default=str)
        return data


def run_mms(run: _Run):
    cfg = run.cfg
    rows = mms_study(build_problem(cfg), cfg.degrees, cfg.meshes, build_solver(cfg), build_picard(cfg))
    cols = ["p", "n", "h", "picard_iters"] + [f"err_{k}" for k in MMS_FIELDS] + [f"rate_{k}" for k in MMS_FIELDS]
    for r in rows:
        if not r["converged"]:
            r["picard_iters"] = f"{r['picard_iters']}*"
            run.fail(f"p={r['p']} n={r['n']} did not converge")
    write_rows(run.path("mms_convergence.csv"), rows, cols)
    for r in rows:
        rates = " ".join(f"{k}:{r[f'rate_{k}']:.2f}" for k in MMS_FIELDS if not math.isnan(r[f"rate_{k}"]))
        print(f"p={r['p']} n={r['n']:3d} err_u={r['err_u']:.3e} err_b={r['err_b']:.3e} {rates}")


def run_solve(run: _Run):
    cfg = run.cfg
    problem = build_problem(cfg)
    solver, pcfg = build_solver(cfg), build_picard(cfg)
    if cfg.steady:
        disc = Discretization(problem, cfg.nx, cfg.ny, cfg.p)
        state, _, stats = picard_solve(disc, disc.initial_state(), math.inf, 0.0, solver, pcfg)
        if not (stats.converged and all(stats.linear_converged)):
            run.fail("steady Picard iteration did not converge")
        write_rows(run.path("picard.csv"), [
            {"iteration": i + 1, "metric": m, "linear_iters": it}
            for i, (m, it) in enumerate(zip(stats.metrics, stats.linear_iters))])
        write_vtk(run.path("solution.vtk"), disc.mesh, disc.basis, state)
        print(f"steady: {stats.iterations} Picard iterations, "
              f"|u| = {l2_norm(disc.mesh, disc.basis, state.coeffs[:, 4:6]):.6e}")
        return

    disc_holder = {}

    def snapshot(step, t, state, trace):
        if cfg.vtk_every and step % cfg.vtk_every == 0:
            d = disc_holder.setdefault("d", Discretization(problem, cfg.nx, cfg.ny, cfg.p))
            write_vtk(run.path(f"fields_{step:05d}.vtk"), d.mesh, d.basis, state)

    s = transient_run(problem, cfg.nx, cfg.ny, cfg.p, solver, build_time(cfg), pcfg,
                      label=cfg.problem, callback=snapshot)
    if s.trajectory is None:
        run.fail(s.error)
        return
    if not s.converged:
        run.fail("a linear solve reached maxit")
    s.trajectory.write_csv(run.path("steps.csv"), timings=cfg.timings)
    print(f"{len(s.trajectory.records)} steps, avg Picard {s.avg_picard:.2f}, "
          f"avg linear/Picard {s.avg_linear:.2f}{'' if s.converged else '*'}, |u| = {s.u_norm:.6e}")


def _summary_table(run: _Run, fname, summaries, key_col):
    rows = []
    for s in summaries:
        if s.trajectory is None:
            run.fail(f"{s.label}: {s.error}")
            row = {key_col: s.label, "avg_linear_iters": "*", "avg_picard_iters": "*"}
        else:
            if not s.converged:
                run.fail(f"{s.label}: a linear solve reached maxit")
            row = s.row(run.cfg.timings)
            row[key_col] = s.label
        rows.append(row)
    cols = [key_col, "avg_linear_iters", "avg_linear_iters_excl_first", "avg_picard_iters", "u_norm"]
    if run.cfg.timings:
        cols.append("time_per_picard")
    write_rows(run.path(fname), rows, cols)
    for r in rows:
        print("  ".join(f"{c}={r.get(c, '')}" for c in cols))


def run_robustness(run: _Run):
    cfg = run.cfg
    if cfg.problem != "island":
        raise ConfigError("robustness sweeps run on the island problem (problem = island)")
    res = robustness_study(cfg.lundquist, cfg.nx, cfg.ny, cfg.p, build_solver(cfg), build_time(cfg),
                           build_picard(cfg), eps_island=cfg.eps_island, sigma=cfg.sigma,
                           kappa=cfg.kappa or 1.0, grading=cfg.grading)
    _summary_table(run, "robustness.csv", res, "S")


def run_compare(run: _Run):
    cfg = run.cfg
    solvers = [build_solver(cfg, k) for k in cfg.preconds]
    res = compare_study(build_problem(cfg), cfg.nx, cfg.ny, cfg.p, solvers, build_time(cfg), build_picard(cfg))
    _summary_table(run, "compare.csv", res, "precond")


def run_generic(run: _Run):
    """Preconditioned solve of ``[[F, -B^T], [B, 0]]`` read from Matrix Market files."""
    cfg = run.cfg
    K = read_matrix_market(cfg.matrix)
    n = K.shape[0]
    if cfg.rhs:
        b = np.asarray(read_matrix_market(cfg.rhs).toarray()).ravel() if cfg.rhs.endswith(".mtx") \
            else np.loadtxt(cfg.rhs, ndmin=1)
    else:
        b = K @ np.ones(n)
    if b.shape != (n,):
        raise ConfigError("right-hand side length does not match the matrix")
    solver = build_solver(cfg)
    if solver.kind == "direct":
        x = sparse_lu_factor(K).solve(b)
        hist = None
    elif solver.kind == "dd-ilu0":
        krylov = fgmres if solver.flexible else gmres
        x, hist = krylov(K, b, Ilu0Richardson(K, cfg.dd_steps), cfg.tol, cfg.tol_is_relative,
                         solver.max_iterations)
    else:
        if cfg.n_u is None:
            raise ConfigError("block preconditioners need n_u (size of the velocity-like block)")
        S = saddle_from_matrix(K, b, cfg.n_u, cfg.dofs_per_node)
        M = make_block_preconditioner(solver.kind, S, solver.amg)
        krylov = fgmres if (solver.flexible or M.variable) else gmres
        x, hist = krylov(K, b, M, cfg.tol, cfg.tol_is_relative, solver.max_iterations)
    np.savetxt(run.path("solution.txt"), x)
    res = float(np.linalg.norm(b - K @ x))
    if hist is not None:
        write_history_csv(run.path("history.csv"), {"generic": hist})
        if not hist.converged:
            run.fail(f"GMRES reached maxit={solver.max_iterations}")
        print(f"iterations {hist.iterations}{'' if hist.converged else '*'}  residual {res:.3e}")
    else:
        print(f"direct solve residual {res:.3e}")


_RUNNERS = {"mms": run_mms, "solve": run_solve, "robustness": run_robustness,
            "compare": run_compare, "generic": run_generic}


def run(subcommand, cfg: RunConfig) -> int:
    """Execute one study; returns the process exit status."""
    if subcommand not in _RUNNERS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    np.random.seed(cfg.seed)
    r = _Run(subcommand, cfg)
    try:
        _RUNNERS[subcommand](r)
    except ArithmeticError as exc:
        r.fail(f"solver failure: {exc}")
    r.manifest()
    return 0 if r.ok else 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="mhdtrace", description=__doc__.split("\n\n")[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="sectioned key = value file")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    args, rest = ap.parse_known_args(argv)
    logging.basicConfig(level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    default_problem = "island" if args.subcommand == "robustness" else None
    if args.subcommand == "generic":
        default_problem = "generic"
    try:
        cfg = parse_config(args.config, rest, problem=default_problem)
        return run(args.subcommand, cfg)
    except ConfigError as exc:
        print(f"mhdtrace: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
