"""Parallel noisy line searches along fixed conjugate directions."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from ..errors import DomainError, EvaluationError, WindowEdgeError
from .fit import BOOTSTRAP_SAMPLES, fit_polynomial_minimum
from .hessian import ConjugateDirections
from .windows import SearchWindow, batched_minima

log = logging.getLogger(__name__)


def _as_pair(value) -> tuple[float, float]:
    if isinstance(value, tuple):
        e, s = value
    elif hasattr(value, "energy"):
        e, s = value.energy, value.sigma
    else:
        e, s = value, 0.0
    e, s = float(e), float(s)
    if not np.isfinite(e):
        raise EvaluationError(f"cost returned {e}")
    return e, s


def evaluate_batch(cost, points: Sequence[np.ndarray], jobs: int = 1) -> list[tuple[float, float]]:
    """Evaluate points concurrently; results come back in input order.

    Evaluators exposing ``reserve``/``evaluate`` get explicit call indices so
    their random streams do not depend on thread scheduling.
    """
    points = [np.asarray(p, dtype=float) for p in points]
    if hasattr(cost, "reserve"):
        start = cost.reserve(len(points))
        tasks = [(lambda p=p, k=start + i: cost.evaluate(p, call_index=k)) for i, p in enumerate(points)]
    else:
        tasks = [(lambda p=p: cost(p)) for p in points]
    if jobs <= 1:
        return [_as_pair(t()) for t in tasks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return [_as_pair(v) for v in pool.map(lambda t: t(), tasks)]


@dataclass
class DirectionFit:
    x_min: float
    sigma_xmin: float
    e_min: float
    sigma_emin: float
    e_zero: float
    at_edge: bool = False
    offsets: list[float] = field(default_factory=list)
    energies: list[float] = field(default_factory=list)
    sigmas: list[float] = field(default_factory=list)


@dataclass
class IterationRecord:
    iteration: int
    center: np.ndarray
    new_center: np.ndarray
    fits: list[DirectionFit]
    energy: float
    sigma: float
    n_calls: int
    total_calls: int

    def to_dict(self) -> dict:
        return {"iteration": self.iteration, "center": self.center.tolist(),
                "new_center": self.new_center.tolist(),
                "fits": [vars(f) for f in self.fits], "energy": self.energy, "sigma": self.sigma,
                "n_calls": self.n_calls, "total_calls": self.total_calls}

    @classmethod
    def from_dict(cls, d: dict) -> "IterationRecord":
        return cls(d["iteration"], np.array(d["center"], dtype=float),
                   np.array(d["new_center"], dtype=float), [DirectionFit(**f) for f in d["fits"]],
                   d["energy"], d["sigma"], d["n_calls"], d["total_calls"])


@dataclass
class LineSearchRun:
    directions: ConjugateDirections
    window: SearchWindow
    iterations: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    converged_iteration: int | None = None

    @property
    def total_calls(self) -> int:
        return self.iterations[-1].total_calls if self.iterations else 0

    @property
    def final_center(self) -> np.ndarray | None:
        return self.iterations[-1].new_center if self.iterations else None

    def to_dict(self) -> dict:
        return {"directions": self.directions.to_dict(), "window": self.window.to_dict(),
                "iterations": [r.to_dict() for r in self.iterations],
                "converged": self.converged, "converged_iteration": self.converged_iteration}

    @classmethod
    def from_dict(cls, d: dict) -> "LineSearchRun":
        return cls(ConjugateDirections.from_dict(d["directions"]), SearchWindow.from_dict(d["window"]),
                   [IterationRecord.from_dict(r) for r in d["iterations"]],
                   d["converged"], d["converged_iteration"])


def _fit_direction(offsets, energies, sigmas, window: SearchWindow, seed) -> DirectionFit:
    offsets = np.asarray(offsets)
    energies = np.asarray(energies)
    sigma = np.asarray(sigmas)
    try:
        f = fit_polynomial_minimum(offsets, energies, sigma, window.degree, seed=seed)
        return DirectionFit(f.x_min, f.sigma_xmin, f.e_min, f.sigma_emin, float(f.value(0.0)),
                            False, offsets.tolist(), energies.tolist(), sigma.tolist())
    except WindowEdgeError as exc:
        log.info("fit hit the window edge at %.4g; re-centering there", exc.x_edge)
        coef = P.polyfit(offsets, energies, window.degree)
        e_sigma = float(np.sqrt(np.mean(sigma ** 2)))
        return DirectionFit(float(exc.x_edge), float(np.ptp(offsets)) / 2, float(exc.e_edge), e_sigma,
                            float(P.polyval(0.0, coef)), True, offsets.tolist(), energies.tolist(),
                            sigma.tolist())


def _joint_sigma(window: SearchWindow, fits: list[DirectionFit], sigma_center: float, seed,
                 B: int = BOOTSTRAP_SAMPLES) -> float:
    """Spread of the combined energy estimate under resampled noise.

    Every direction reuses the center point, so one center draw per replicate
    is shared across all fits; treating the directions as independent would
    miss that correlation along with the one between each fit's minimum and
    its value at zero.
    """
    sig = [np.asarray(f.sigmas, dtype=float) for f in fits]
    if not any(np.any(s > 0) for s in sig):
        return 0.0
    rng = np.random.default_rng(seed)
    zero = window.M // 2
    center_noise = sigma_center * rng.standard_normal(B)
    total = np.zeros(B)
    base = np.zeros(B)
    for d, f in enumerate(fits):
        xs = np.asarray(f.offsets)
        noise = sig[d][:, None] * rng.standard_normal((xs.size, B))
        noise[zero] = center_noise
        w = 1.0 / sig[d] if np.all(sig[d] > 0) else np.ones_like(xs)
        v = P.polyvander(xs, window.degree) * w[:, None]
        coefs = np.linalg.lstsq(v, (np.asarray(f.energies)[:, None] + noise) * w[:, None], rcond=None)[0].T
        xm = batched_minima(coefs, xs.min(), xs.max())
        e_min = np.array([P.polyval(x, c) for x, c in zip(xm, coefs)])
        total += e_min - coefs[:, 0]
        base += coefs[:, 0]
    return float(np.std(base / len(fits) + total, ddof=1))


def line_search_iteration(noisy_cost, center, dirs: ConjugateDirections, window: SearchWindow,
                          jobs: int = 1, iteration: int = 1, previous_calls: int = 0,
                          sequential: bool = False, seed: int = 0) -> tuple[np.ndarray, IterationRecord]:
    """One sweep over all directions.

    Simultaneous mode shares the center point: 1 + (M-1)·N_dir evaluations,
    then every direction moves at once. Sequential mode re-centers after
    each direction and spends M evaluations per direction.
    """
    center = np.asarray(center, dtype=float)
    if window.widths.size != dirs.n_dir:
        raise DomainError(f"{window.widths.size} window widths for {dirs.n_dir} directions")
    zero = window.M // 2
    fits: list[DirectionFit] = []
    n_calls = 0

    if not sequential:
        points = [center]
        for d in range(dirs.n_dir):
            v = dirs.directions[:, d]
            points += [center + t * v for j, t in enumerate(window.offsets(d)) if j != zero]
        results = evaluate_batch(noisy_cost, points, jobs)
        n_calls = len(points)
        e0, s0 = results[0]
        k = 1
        for d in range(dirs.n_dir):
            chunk = results[k:k + window.M - 1]
            k += window.M - 1
            es = [e for e, _ in chunk]
            ss = [s for _, s in chunk]
            es.insert(zero, e0)
            ss.insert(zero, s0)
            fits.append(_fit_direction(window.offsets(d), es, ss, window, [seed, iteration, d]))
        step = sum(f.x_min * dirs.directions[:, d] for d, f in enumerate(fits))
        new_center = center + step
        base = float(np.mean([f.e_zero for f in fits]))
        energy = base + sum(f.e_min - f.e_zero for f in fits)
        sigma = _joint_sigma(window, fits, s0, [seed, iteration])
    else:
        new_center = center.copy()
        for d in range(dirs.n_dir):
            v = dirs.directions[:, d]
            pts = [new_center + t * v for t in window.offsets(d)]
            res = evaluate_batch(noisy_cost, pts, jobs)
            n_calls += len(pts)
            fit = _fit_direction(window.offsets(d), [e for e, _ in res], [s for _, s in res],
                                 window, [seed, iteration, d])
            fits.append(fit)
            new_center = new_center + fit.x_min * v
        energy = fits[-1].e_min
        sigma = fits[-1].sigma_emin
    rec = IterationRecord(iteration, center, new_center, fits, float(energy), sigma, n_calls,
                          previous_calls + n_calls)
    return new_center, rec


def is_converged(prev: IterationRecord, cur: IterationRecord, abs_tol: float = 0.0) -> bool:
    """Successive energies agree within twice their combined uncertainty."""
    gap = abs(cur.energy - prev.energy)
    return gap < max(2.0 * np.hypot(cur.sigma, prev.sigma), abs_tol) or gap == 0.0


def run_line_search(noisy_cost, x0, dirs: ConjugateDirections, window: SearchWindow,
                    max_iters: int = 10, jobs: int = 1, sequential: bool = False, seed: int = 0,
                    abs_tol: float = 0.0, run: LineSearchRun | None = None,
                    on_iteration: Callable[[LineSearchRun], None] | None = None) -> LineSearchRun:
    """Iterate line searches with the Hessian and windows held fixed.

    Passing a partially completed ``run`` resumes after its last iteration.
    """
    run = LineSearchRun(dirs, window) if run is None else run
    center = np.asarray(x0, dtype=float) if not run.iterations else run.final_center
    while not run.converged and len(run.iterations) < max_iters:
        k = len(run.iterations) + 1
        center, rec = line_search_iteration(noisy_cost, center, dirs, window, jobs, k,
                                            run.total_calls, sequential, seed)
        run.iterations.append(rec)
        if k >= 2 and is_converged(run.iterations[-2], rec, abs_tol):
            run.converged = True
            run.converged_iteration = k - 1
        if on_iteration is not None:
            on_iteration(run)
    return run


def bootstrap_energy_uncertainty(run: LineSearchRun, cost, B: int = 200, seed: int = 0,
                                 jobs: int = 1) -> np.ndarray:
    """Per-iteration energy spread from resampling each fitted minimum.

    Each replicate draws offsets ``t_d ~ N(x_min_d, sigma_xmin_d)``, rebuilds
    the center and evaluates ``cost`` there.
    """
    if B < 2:
        raise DomainError(f"bootstrap needs B >= 2, got {B}")
    rng = np.random.default_rng(seed)
    V = run.directions.directions
    out = np.zeros(len(run.iterations))
    for i, rec in enumerate(run.iterations):
        mu = np.array([f.x_min for f in rec.fits])
        sd = np.array([f.sigma_xmin for f in rec.fits])
        if not np.any(sd > 0):
            continue
        t = mu + sd * rng.standard_normal((B, mu.size))
        pts = [rec.center + V @ ti for ti in t]
        energies = [e for e, _ in evaluate_batch(cost, pts, jobs)]
        out[i] = float(np.std(energies, ddof=1))
    return out
