"""Monte Carlo choice of line-search window widths on the surrogate."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as P

from ..errors import DomainError, InfeasibleWindowError
from .fit import interior_minimum
from .hessian import ConjugateDirections

N_WIDTHS = 12
N_NOISE_LEVELS = 10
RESAMPLES = 200
MAX_WIDTH = np.pi / 2

TARGET_KINDS = ("param_error", "energy_error", "noise")


@dataclass(frozen=True)
class WindowTarget:
    """What the windows are tuned for.

    ``param_error``: per-direction parameter error δθ. ``energy_error``: a
    total energy error split over directions as ½·λ_d·δθ_d² each. ``noise``:
    the evaluation noise σ is fixed and each width minimizes δθ_d.
    """

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise DomainError(f"target kind must be one of {TARGET_KINDS}, got {self.kind!r}")
        if not self.value > 0:
            raise DomainError("target value must be positive")


@dataclass
class SearchWindow:
    widths: np.ndarray
    M: int = 7
    delta_e: float = 0.0
    degree: int = 4
    param_errors: np.ndarray | None = None
    error_tables: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.widths = np.asarray(self.widths, dtype=float)
        if np.any(self.widths <= 0):
            raise DomainError("window half-widths must be positive")
        if self.M % 2 == 0:
            raise DomainError(f"grid size M must be odd, got {self.M}")
        if self.degree not in (2, 3, 4):
            raise DomainError(f"fit degree must be 2, 3 or 4, got {self.degree}")
        if self.M < self.degree + 2:
            raise DomainError(f"M={self.M} points cannot overdetermine a degree-{self.degree} fit")

    def offsets(self, d: int) -> np.ndarray:
        return np.linspace(-self.widths[d], self.widths[d], self.M)

    def to_dict(self) -> dict:
        return {"widths": self.widths.tolist(), "M": self.M, "delta_e": self.delta_e,
                "degree": self.degree,
                "param_errors": None if self.param_errors is None else self.param_errors.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SearchWindow":
        pe = d.get("param_errors")
        return cls(np.array(d["widths"], dtype=float), int(d["M"]), float(d["delta_e"]),
                   int(d["degree"]), None if pe is None else np.array(pe, dtype=float))


def batched_minima(coefs: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Interior minimum nearest 0 of each polynomial row (ascending powers).

    Rows without one get the lower of the two window edges.
    """
    coefs = np.atleast_2d(coefs)
    k, n = coefs.shape
    d1 = coefs[:, 1:] * np.arange(1, n)
    d2 = d1[:, 1:] * np.arange(1, n - 1)
    out = np.full(k, np.nan)
    if n - 1 == 2:
        with np.errstate(divide="ignore", invalid="ignore"):
            r = -d1[:, 0] / d1[:, 1]
        ok = (d1[:, 1] > 0) & (r > lo) & (r < hi)
        out[ok] = r[ok]
    else:
        for i in range(k):
            c = d1[i]
            nz = np.flatnonzero(c)
            if nz.size == 0 or nz[-1] == 0:
                continue
            roots = P.polyroots(c[: nz[-1] + 1])
            roots = roots[np.abs(roots.imag) <= 1e-9 * max(1.0, hi - lo)].real
            roots = roots[(roots > lo) & (roots < hi)]
            roots = roots[P.polyval(roots, d2[i]) > 0]
            if roots.size:
                out[i] = roots[np.argmin(np.abs(roots))]
    miss = np.isnan(out)
    if np.any(miss):
        e_lo = P.polyval(lo, coefs[miss].T)
        e_hi = P.polyval(hi, coefs[miss].T)
        out[miss] = np.where(e_lo <= e_hi, lo, hi)
    return out


def _error_table(g: Callable[[float], float], widths, noise, M, degree, rng) -> np.ndarray:
    table = np.empty((len(widths), len(noise)))
    z = rng.standard_normal((M, RESAMPLES))
    for i, w in enumerate(widths):
        xs = np.linspace(-w, w, M)
        ys = np.array([g(x) for x in xs])
        pinv = np.linalg.pinv(P.polyvander(xs, degree))
        if interior_minimum(pinv @ ys, -w, w) is None:
            # the window cannot locate a minimum even without noise
            table[i] = np.inf
            continue
        for j, s in enumerate(noise):
            coefs = (pinv @ (ys[:, None] + s * z)).T
            xm = batched_minima(coefs, -w, w)
            table[i, j] = abs(xm.mean()) + xm.std(ddof=1)
    return table


def optimize_windows(surrogate_cost: Callable[[np.ndarray], float], x_star, dirs: ConjugateDirections,
                     target: WindowTarget, M: int = 7, degree: int = 4, seed: int = 0,
                     max_width: float = MAX_WIDTH) -> SearchWindow:
    """Pick per-direction half-widths W_d and the largest admissible noise level.

    For each direction the surrogate is sampled on M uniform points over
    [-W, W] for a log grid of widths; Gaussian noise is added K times per
    noise level and the fitted minimum's error |bias| + std is tabulated.
    """
    x_star = np.asarray(x_star, dtype=float)
    lam = dirs.kept_eigenvalues
    n_dir = dirs.n_dir
    SearchWindow(np.ones(n_dir), M, 0.0, degree)  # validates M and degree early

    if target.kind == "noise":
        dtheta = None
        noise = np.array([target.value])
    else:
        if target.kind == "param_error":
            dtheta = np.full(n_dir, target.value)
        else:
            dtheta = np.sqrt(2 * target.value / (n_dir * lam))
        scale = lam * dtheta ** 2
        noise = np.logspace(np.log10(1e-3 * scale.min()), np.log10(10 * scale.max()), N_NOISE_LEVELS)

    tables, width_grids = [], []
    for d in range(n_dir):
        base = dtheta[d] if dtheta is not None else np.sqrt(noise[0] / lam[d])
        widths = np.unique(np.minimum(base * np.logspace(np.log10(0.5), np.log10(200), N_WIDTHS), max_width))
        v = dirs.directions[:, d]
        rng = np.random.default_rng([seed, d])
        tables.append(_error_table(lambda t: float(surrogate_cost(x_star + t * v)), widths, noise,
                                   M, degree, rng))
        width_grids.append(widths)

    if dtheta is None:
        best = [int(np.argmin(t[:, 0])) for t in tables]
        return SearchWindow(np.array([w[b] for w, b in zip(width_grids, best)]), M, float(noise[0]),
                            degree, np.array([t[b, 0] for t, b in zip(tables, best)]), tables)

    admissible = []
    for d, t in enumerate(tables):
        ok = np.flatnonzero(t.min(axis=0) <= dtheta[d])
        if ok.size == 0:
            frontier = {"direction": d, "target": float(dtheta[d]),
                        "noise_levels": noise.tolist(), "best_error": t.min(axis=0).tolist()}
            raise InfeasibleWindowError(
                f"direction {d}: no width reaches δθ={dtheta[d]:.3g} on the noise grid", frontier)
        admissible.append(ok.max())
    j = min(admissible)
    best = [int(np.argmin(t[:, j])) for t in tables]
    return SearchWindow(np.array([w[b] for w, b in zip(width_grids, best)]), M, float(noise[j]),
                        degree, np.array([t[b, j] for t, b in zip(tables, best)]), tables)
