"""Surrogate pre-optimization, finite-difference Hessians and conjugate directions."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from ..errors import DomainError, EmptyDirectionsError, EvaluationError, NonConvergenceError

log = logging.getLogger(__name__)

Cost = Callable[[np.ndarray], float]

DEFAULT_DROP_TOL = 1e-3


def _finite(value, x) -> float:
    value = float(value)
    if not np.isfinite(value):
        raise EvaluationError(f"cost returned {value} at {np.asarray(x).tolist()}")
    return value


def central_gradient(cost: Cost, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        h = step * max(1.0, abs(x[k]))
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (_finite(cost(x + e), x + e) - _finite(cost(x - e), x - e)) / (2 * h)
    return g


@dataclass
class SurrogateMinimum:
    x: np.ndarray
    energy: float
    grad_inf: float
    n_calls: int
    converged: bool
    message: str = ""


def surrogate_minimize(cost: Cost, x0: Sequence[float], tol: float = 1e-6,
                       max_iter: int | None = None, grad_step: float = 1e-6) -> SurrogateMinimum:
    """BFGS with central-difference gradients on a noiseless cost.

    Raises :class:`NonConvergenceError` (carrying the best point) when the
    iteration cap is hit. A line-search stall on a rough landscape returns
    the best point with ``converged=False`` instead; the caller decides.
    """
    x0 = np.asarray(x0, dtype=float)
    max_iter = 500 * x0.size if max_iter is None else max_iter
    calls = 0
    best = [None, np.inf]

    def f(x):
        nonlocal calls
        calls += 1
        v = _finite(cost(x), x)
        if v < best[1]:
            best[0], best[1] = np.array(x, copy=True), v
        return v

    res = minimize(f, x0, method="BFGS", jac=lambda x: central_gradient(f, x, grad_step),
                   options={"gtol": tol, "maxiter": max_iter, "norm": np.inf})
    if res.status == 1:
        raise NonConvergenceError(f"surrogate minimization hit {max_iter} iterations",
                                  best_x=best[0], best_f=best[1], n_calls=calls)
    x = np.asarray(res.x, dtype=float)
    energy = float(res.fun)
    if res.status != 0 and best[1] < energy:
        x, energy = best[0], best[1]
    grad_inf = float(np.max(np.abs(central_gradient(f, x, grad_step))))
    converged = grad_inf <= tol
    if not converged:
        log.warning("surrogate minimization stalled with |grad|_inf=%.3g (%s)", grad_inf, res.message)
    return SurrogateMinimum(x, energy, grad_inf, calls, converged, str(res.message))


@dataclass
class HessianResult:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    fd_step: float
    center: np.ndarray | None = None
    n_calls: int = 0

    @classmethod
    def from_matrix(cls, matrix, fd_step: float = 0.0, center=None, n_calls: int = 0) -> "HessianResult":
        m = np.asarray(matrix, dtype=float)
        m = (m + m.T) / 2
        w, v = np.linalg.eigh(m)
        order = np.argsort(w)[::-1]
        return cls(m, w[order], v[:, order], fd_step,
                   None if center is None else np.asarray(center, dtype=float), n_calls)

    def to_dict(self) -> dict:
        return {"matrix": self.matrix.tolist(), "eigenvalues": self.eigenvalues.tolist(),
                "eigenvectors": self.eigenvectors.tolist(), "fd_step": self.fd_step,
                "center": None if self.center is None else self.center.tolist(),
                "n_calls": self.n_calls}

    @classmethod
    def from_dict(cls, d: dict) -> "HessianResult":
        return cls(np.array(d["matrix"], dtype=float), np.array(d["eigenvalues"], dtype=float),
                   np.array(d["eigenvectors"], dtype=float), float(d["fd_step"]),
                   None if d.get("center") is None else np.array(d["center"], dtype=float),
                   int(d.get("n_calls", 0)))


def default_fd_step(x) -> float:
    return 1e-3 * max(1.0, float(np.max(np.abs(x))) if np.size(x) else 1.0)


def finite_difference_hessian(cost: Cost, x: Sequence[float], step: float | None = None,
                              jobs: int = 1) -> HessianResult:
    """Central second differences with the four-point stencil for every (k, l).

    Diagonal entries use the same stencil, i.e. points at ``x ± 2h e_k``.
    """
    x = np.asarray(x, dtype=float)
    step = default_fd_step(x) if step is None else float(step)
    if step <= 0:
        raise DomainError(f"finite-difference step must be positive, got {step}")
    n = x.size
    eye = np.eye(n) * step
    points: dict[tuple, np.ndarray] = {}
    stencil = []
    for k in range(n):
        for l in range(k, n):
            entry = []
            for sk, sl, w in ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)):
                p = x + sk * eye[k] + sl * eye[l]
                key = tuple(np.round((p - x) / step).astype(int))
                points.setdefault(key, p)
                entry.append((key, w))
            stencil.append((k, l, entry))
    keys = list(points)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        values = list(pool.map(lambda p: _finite(cost(p), p), (points[k] for k in keys)))
    f = dict(zip(keys, values))
    m = np.zeros((n, n))
    for k, l, entry in stencil:
        m[k, l] = m[l, k] = sum(w * f[key] for key, w in entry) / (4 * step * step)
    return HessianResult.from_matrix(m, step, x, len(keys))


@dataclass
class ConjugateDirections:
    directions: np.ndarray  # columns
    kept_eigenvalues: np.ndarray
    kept_indices: tuple[int, ...]
    dropped: dict[int, str] = field(default_factory=dict)

    @property
    def n_dir(self) -> int:
        return self.directions.shape[1]

    def to_dict(self) -> dict:
        return {"directions": self.directions.tolist(),
                "kept_eigenvalues": self.kept_eigenvalues.tolist(),
                "kept_indices": list(self.kept_indices),
                "dropped": {str(k): v for k, v in self.dropped.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "ConjugateDirections":
        return cls(np.array(d["directions"], dtype=float).reshape(-1, len(d["kept_indices"])),
                   np.array(d["kept_eigenvalues"], dtype=float), tuple(d["kept_indices"]),
                   {int(k): v for k, v in d["dropped"].items()})


def select_directions(h: HessianResult, drop_tol: float = DEFAULT_DROP_TOL,
                      keep_top: int | None = None) -> ConjugateDirections:
    dropped: dict[int, str] = {}
    kept = []
    for idx, lam in enumerate(h.eigenvalues):
        if lam < 0 and -lam >= drop_tol:
            dropped[idx] = "negative"
        elif lam < drop_tol:
            dropped[idx] = "near-zero"
        else:
            kept.append(idx)
    if keep_top is not None:
        if keep_top < 1:
            raise DomainError("keep_top must be positive")
        for idx in kept[keep_top:]:
            dropped[idx] = "truncated-by-rank"
        kept = kept[:keep_top]
    if not kept:
        raise EmptyDirectionsError(
            f"every eigenvalue fell below drop_tol={drop_tol}: {np.round(h.eigenvalues, 6).tolist()}")
    return ConjugateDirections(h.eigenvectors[:, kept].copy(), h.eigenvalues[kept].copy(),
                               tuple(kept), dict(sorted(dropped.items())))
