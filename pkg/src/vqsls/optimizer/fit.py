"""Weighted polynomial fits along one search direction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from ..errors import DomainError, WindowEdgeError

BOOTSTRAP_SAMPLES = 200


@dataclass
class FitResult:
    x_min: float
    e_min: float
    sigma_xmin: float
    sigma_emin: float
    coefficients: np.ndarray  # ascending powers

    def value(self, x) -> np.ndarray:
        return P.polyval(x, self.coefficients)


def _lstsq(xs, ys, weights, degree):
    v = P.polyvander(xs, degree) * weights[:, None]
    coef, *_ = np.linalg.lstsq(v, ys * (weights[:, None] if ys.ndim == 2 else weights), rcond=None)
    return coef


def interior_minimum(coef: np.ndarray, lo: float, hi: float, center: float = 0.0) -> float | None:
    """Stationary point with positive curvature in (lo, hi) nearest ``center``."""
    d1 = P.polyder(coef)
    d2 = P.polyder(d1)
    if len(d1) == 1 or not np.any(d1[1:]):
        return None
    roots = P.polyroots(d1)
    roots = roots[np.abs(roots.imag) <= 1e-9 * max(1.0, hi - lo)].real
    roots = roots[(roots > lo) & (roots < hi)]
    roots = roots[P.polyval(roots, d2) > 0]
    if roots.size == 0:
        return None
    return float(roots[np.argmin(np.abs(roots - center))])


def fit_polynomial_minimum(xs, ys, sigma, degree: int = 4, *, bootstrap: int = BOOTSTRAP_SAMPLES,
                           seed: int = 0) -> FitResult:
    """Fit ``ys(xs)`` and locate its minimum inside the sampled window.

    ``sigma`` is a scalar or per-point noise level used both as the fit weight
    and for the parametric bootstrap behind ``sigma_xmin``/``sigma_emin``.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if degree not in (2, 3, 4):
        raise DomainError(f"fit degree must be 2, 3 or 4, got {degree}")
    if xs.shape != ys.shape or xs.ndim != 1:
        raise DomainError("xs and ys must be 1-D arrays of equal length")
    if xs.size < degree + 2:
        raise DomainError(f"{xs.size} points cannot overdetermine a degree-{degree} fit")
    sig = np.broadcast_to(np.asarray(sigma, dtype=float), xs.shape)
    if np.any(sig < 0):
        raise DomainError("sigma must be non-negative")
    weights = 1.0 / sig if np.all(sig > 0) else np.ones_like(xs)
    lo, hi = float(xs.min()), float(xs.max())
    coef = _lstsq(xs, ys, weights, degree)
    x_min = interior_minimum(coef, lo, hi)
    if x_min is None:
        edge = lo if P.polyval(lo, coef) <= P.polyval(hi, coef) else hi
        raise WindowEdgeError(f"no interior minimum in [{lo:.4g}, {hi:.4g}]",
                              x_edge=edge, e_edge=float(P.polyval(edge, coef)))
    e_min = float(P.polyval(x_min, coef))
    if not np.any(sig > 0) or bootstrap < 2:
        return FitResult(x_min, e_min, 0.0, 0.0, coef)

    rng = np.random.default_rng(seed)
    samples = ys[:, None] + rng.standard_normal((xs.size, bootstrap)) * sig[:, None]
    coefs = _lstsq(xs, samples, weights, degree)
    xb, eb = [], []
    for c in coefs.T:
        xm = interior_minimum(c, lo, hi)
        if xm is None:
            # an edge-bound replicate is as far as the window allows
            xm = lo if P.polyval(lo, c) <= P.polyval(hi, c) else hi
        xb.append(xm)
        eb.append(P.polyval(xm, c))
    return FitResult(x_min, e_min, float(np.std(xb, ddof=1)), float(np.std(eb, ddof=1)), coef)
