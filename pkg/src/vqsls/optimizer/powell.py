"""Powell direction-set baseline with call accounting."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import OptimizeWarning, minimize

from ..errors import NonConvergenceError
from .hessian import ConjugateDirections
from .linesearch import _as_pair


@dataclass
class PowellResult:
    x: np.ndarray
    n_calls: int
    converged: bool
    # (calls so far, best point so far, its measured energy) after every call
    trajectory: list[tuple[int, np.ndarray, float]] = field(default_factory=list, repr=False)
    # (cycle, calls so far, current energy) after every direction-set cycle
    iterations: list[tuple[int, int, float]] = field(default_factory=list)


def powell_minimize(noisy_cost, x0, initial_dirs: ConjugateDirections | np.ndarray | None = None,
                    tol: float = 1e-4, max_calls: int = 10_000, raise_on_cap: bool = True) -> PowellResult:
    """Minimize with scipy's Powell method in the span of ``initial_dirs``.

    The search runs in coordinates ``y`` with ``x = x0 + D y`` so the initial
    direction set is exactly the supplied directions.
    """
    x0 = np.asarray(x0, dtype=float)
    if initial_dirs is None:
        D = np.eye(x0.size)
    elif isinstance(initial_dirs, ConjugateDirections):
        D = initial_dirs.directions
    else:
        D = np.asarray(initial_dirs, dtype=float)
    calls = 0
    best_x, best_f = x0, np.inf
    traj: list[tuple[int, np.ndarray, float]] = []

    def f(y):
        nonlocal calls, best_x, best_f
        x = x0 + D @ y
        if hasattr(noisy_cost, "evaluate"):
            e, _ = _as_pair(noisy_cost.evaluate(x))
        else:
            e, _ = _as_pair(noisy_cost(x))
        calls += 1
        if e < best_f:
            best_x, best_f = x, e
        traj.append((calls, best_x, best_f))
        return e

    cycles: list[tuple[int, int, float]] = []

    def on_cycle(intermediate_result):
        cycles.append((len(cycles) + 1, calls, float(intermediate_result.fun)))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OptimizeWarning)
        res = minimize(f, np.zeros(D.shape[1]), method="Powell",
                       options={"xtol": tol, "ftol": tol, "maxfev": max_calls}, callback=on_cycle)
    x = x0 + D @ np.atleast_1d(res.x)
    if res.status != 0 and raise_on_cap:
        raise NonConvergenceError(f"Powell stopped: {res.message}", best_x=best_x, best_f=best_f,
                                  n_calls=calls)
    return PowellResult(x, calls, res.status == 0, traj, cycles)
