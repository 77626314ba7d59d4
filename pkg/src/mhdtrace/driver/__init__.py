"""Picard iteration, time stepping and benchmark problems."""
from .linear import SOLVERS, LinearResult, SolverConfig, solve_trace
from .picard import (
    Discretization,
    PicardConfig,
    PicardFailure,
    PicardStats,
    TimeConfig,
    TimeStepUnderflow,
    Trajectory,
    advance_time,
    picard_metric,
    picard_solve,
)
from .problems import ProblemSpec, cavity_problem, hmkh_problem, island_problem, mms_problem

__all__ = [
    "SOLVERS", "LinearResult", "SolverConfig", "solve_trace", "Discretization", "PicardConfig",
    "PicardFailure", "PicardStats", "TimeConfig", "TimeStepUnderflow", "Trajectory",
    "advance_time", "picard_metric", "picard_solve", "ProblemSpec", "cavity_problem",
    "hmkh_problem", "island_problem", "mms_problem",
]
