"""Matrix-free bilevel optimization with dynamic Lanczos hyper-gradient solvers."""

from .core import (
    BilevelProblem,
    CountingOracles,
    EvalCounters,
    HyperGradEstimate,
    exact_hypergrad,
    hypergrad_estimate,
    lower_gd_step,
)
from .kernels import SymTridiagonal, dense_solve, finite_diff_gradient, solve_sym_tridiag, tridiag_least_squares
from .krylov import LanczosState, cg_solve, classic_lanczos, dlanczos_step, minres_correction
from .solvers import (
    RunResult,
    SolverConfig,
    TraceRecord,
    baseline_run,
    lancbio_minres_run,
    lancbio_run,
    run_solver,
    subbio_run,
)

__version__ = "0.1.0"

__all__ = [
    "BilevelProblem", "CountingOracles", "EvalCounters", "HyperGradEstimate",
    "LanczosState", "RunResult", "SolverConfig", "SymTridiagonal", "TraceRecord",
    "baseline_run", "cg_solve", "classic_lanczos", "dense_solve", "dlanczos_step",
    "exact_hypergrad", "finite_diff_gradient", "hypergrad_estimate", "lancbio_minres_run",
    "lancbio_run", "lower_gd_step", "minres_correction", "run_solver", "solve_sym_tridiag",
    "subbio_run", "tridiag_least_squares",
]
