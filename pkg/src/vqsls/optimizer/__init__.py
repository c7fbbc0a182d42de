"""Surrogate-Hessian line search and the Powell baseline."""
from .fit import FitResult, fit_polynomial_minimum
from .hessian import (ConjugateDirections, HessianResult, SurrogateMinimum, central_gradient,
                      default_fd_step, finite_difference_hessian, select_directions,
                      surrogate_minimize)
from .linesearch import (DirectionFit, IterationRecord, LineSearchRun, bootstrap_energy_uncertainty,
                         evaluate_batch, is_converged, line_search_iteration, run_line_search)
from .powell import PowellResult, powell_minimize
from .windows import SearchWindow, WindowTarget, optimize_windows

__all__ = [
    "ConjugateDirections", "DirectionFit", "FitResult", "HessianResult", "IterationRecord",
    "LineSearchRun", "PowellResult", "SearchWindow", "SurrogateMinimum", "WindowTarget",
    "bootstrap_energy_uncertainty", "central_gradient", "default_fd_step", "evaluate_batch",
    "finite_difference_hessian", "fit_polynomial_minimum", "is_converged", "line_search_iteration",
    "optimize_windows", "powell_minimize", "run_line_search", "select_directions",
    "surrogate_minimize",
]
