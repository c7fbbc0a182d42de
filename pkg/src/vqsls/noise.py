"""Noisy, call-counting wrappers around noiseless cost functions."""
from __future__ import annotations

import csv
import hashlib
import logging
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, DomainError
from .pauli import (MeasurementGrouping, PauliHamiltonian, pauli_variances, r_hat,
                    shots_ungrouped, sorted_insertion)
from .spin_sim import apply_pauli, pauli_expectations

log = logging.getLogger(__name__)

NOISE_KINDS = ("none", "gaussian", "shots", "depolarizing")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "none"
    sigma: float = 0.0
    n_shots: int = 1
    grouping: MeasurementGrouping | None = None
    p: float = 0.0
    inverse_rescale: bool = False

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise DomainError(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if self.sigma < 0:
            raise DomainError("sigma must be non-negative")
        if self.n_shots < 1:
            raise DomainError("n_shots must be at least 1")
        if not 0 <= self.p < 1:
            raise DomainError("depolarizing p must lie in [0, 1)")

    @classmethod
    def none(cls) -> "NoiseSpec":
        return cls()

    @classmethod
    def gaussian(cls, sigma: float) -> "NoiseSpec":
        return cls("gaussian", sigma=sigma)

    @classmethod
    def shots(cls, n_shots: int, grouping: MeasurementGrouping | None = None) -> "NoiseSpec":
        return cls("shots", n_shots=int(n_shots), grouping=grouping)

    @classmethod
    def depolarizing(cls, p: float, inverse_rescale: bool = False) -> "NoiseSpec":
        return cls("depolarizing", p=p, inverse_rescale=inverse_rescale)


@dataclass(frozen=True)
class Evaluation:
    energy: float
    sigma: float


def params_hash(params) -> str:
    return hashlib.sha256(np.asarray(params, dtype="<f8").tobytes()).hexdigest()[:16]


def allocate_shots(grouping: MeasurementGrouping, h: PauliHamiltonian, n_shots: int) -> np.ndarray:
    """Shots per group proportional to the group's coefficient 2-norm, floored at 1."""
    coef = h.coefficients
    weight = np.array([np.sqrt(np.sum(coef[list(g)] ** 2)) for g in grouping.groups])
    if weight.sum() == 0:
        return np.ones(len(weight), dtype=np.int64)
    n = np.floor(n_shots * weight / weight.sum()).astype(np.int64)
    if np.any(n < 1):
        log.warning("%d measurement groups received no shots; using 1 each", int(np.sum(n < 1)))
        n = np.maximum(n, 1)
    return n


def group_moments(amplitudes: np.ndarray, h: PauliHamiltonian, grouping: MeasurementGrouping,
                  covariances: bool = False):
    """Exact mean of each group observable and its single-shot variance.

    By default the variance is ``sum_l a_l^2 (1 - <P_l>^2)``, treating the
    terms of a group as uncorrelated; ``covariances=True`` gives the full
    ``<O^2> - <O>^2`` instead.
    """
    exp = pauli_expectations(amplitudes, h)
    coef = h.coefficients
    means, variances = [], []
    for g in grouping.groups:
        idx = list(g)
        means.append(float(np.dot(coef[idx], exp[idx])))
        if covariances:
            o_psi = np.zeros_like(amplitudes)
            for i in idx:
                o_psi += coef[i] * apply_pauli(amplitudes, h.terms[i].string)
            variances.append(max(0.0, float(np.vdot(o_psi, o_psi).real) - means[-1] ** 2))
        else:
            variances.append(float(np.sum(coef[idx] ** 2 * np.clip(1.0 - exp[idx] ** 2, 0.0, None))))
    return np.array(means), np.array(variances)


def _dense(state) -> np.ndarray:
    if hasattr(state, "to_statevector"):
        return np.asarray(state.to_statevector())
    if hasattr(state, "amplitudes") and not isinstance(state.amplitudes, dict):
        return np.asarray(state.amplitudes)
    return np.asarray(state)


class CountedEvaluator:
    """Adds noise to ``cost`` and counts evaluations.

    Each evaluation draws from a generator seeded by ``(seed, call_index)``,
    so results depend only on the index, never on thread timing. Shot noise
    needs ``cost.state(params)`` and a Hamiltonian (``hamiltonian`` or
    ``cost.h``); depolarizing noise needs the Hamiltonian's identity part.
    """

    def __init__(self, cost: Callable, noise: NoiseSpec | None = None, seed: int = 0,
                 hamiltonian: PauliHamiltonian | None = None, log_path: str | Path | None = None):
        self.cost = cost
        self.noise = noise or NoiseSpec()
        self.seed = int(seed)
        self.h = hamiltonian if hamiltonian is not None else getattr(cost, "h", None)
        self._lock = threading.Lock()
        self._counter = 0
        self._log_rows: dict[int, tuple] = {}
        self.log_path = Path(log_path) if log_path is not None else None
        if self.noise.kind in ("shots", "depolarizing") and self.h is None:
            raise DomainError(f"{self.noise.kind} noise needs the Pauli Hamiltonian")
        if self.noise.kind == "shots":
            self.grouping = self.noise.grouping or sorted_insertion(self.h)
            self.shots_per_group = allocate_shots(self.grouping, self.h, self.noise.n_shots)

    @property
    def counter(self) -> int:
        return self._counter

    @counter.setter
    def counter(self, value: int):
        with self._lock:
            self._counter = int(value)

    def reserve(self, n: int) -> int:
        """Claim ``n`` consecutive call indices; returns the first."""
        with self._lock:
            start = self._counter
            self._counter += n
        return start

    def rng(self, call_index: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, call_index])

    def __call__(self, params) -> tuple[float, float]:
        e = self.evaluate(params)
        return e.energy, e.sigma

    def evaluate(self, params, call_index: int | None = None) -> Evaluation:
        params = np.asarray(params, dtype=float)
        if call_index is None:
            call_index = self.reserve(1)
        kind = self.noise.kind
        if kind == "shots":
            result = self._shots(params, call_index)
        else:
            energy = float(self.cost(params))
            if kind == "none":
                result = Evaluation(energy, 0.0)
            elif kind == "gaussian":
                s = self.noise.sigma
                result = Evaluation(energy + s * self.rng(call_index).standard_normal(), s)
            else:
                result = Evaluation(self.depolarize(energy), 0.0)
        with self._lock:
            self._log_rows[call_index] = (call_index, params_hash(params), result.energy, result.sigma)
        return result

    def depolarize(self, energy: float) -> float:
        p = self.noise.p
        e_id = self.h.identity_coefficient
        damped = (1 - p) * (energy - e_id)
        if self.noise.inverse_rescale:
            damped /= 1 - p
        return damped + e_id

    def _shots(self, params, call_index) -> Evaluation:
        amps = _dense(self.cost.state(params))
        if amps.size != 1 << self.h.n_qubits:
            raise DimensionError(f"state size {amps.size} vs {self.h.n_qubits}-qubit Hamiltonian")
        mu, var = group_moments(amps, self.h, self.grouping)
        sd = np.sqrt(var / self.shots_per_group)
        draws = mu + sd * self.rng(call_index).standard_normal(mu.size)
        return Evaluation(float(self.h.identity_coefficient + draws.sum()), float(np.sqrt(np.sum(sd ** 2))))

    def log_rows(self) -> list[tuple]:
        with self._lock:
            return [self._log_rows[k] for k in sorted(self._log_rows)]

    def restore(self, counter: int, rows=()):
        """Resume from a checkpoint: continue numbering at ``counter``."""
        with self._lock:
            self._counter = int(counter)
            for r in rows:
                self._log_rows[int(r[0])] = (int(r[0]), str(r[1]), float(r[2]), float(r[3]))

    def write_log(self, path: str | Path | None = None) -> Path:
        path = Path(path) if path is not None else self.log_path
        if path is None:
            raise DomainError("no log path given")
        rows = self.log_rows()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["call_index", "params_hash", "energy", "sigma"])
            for idx, h, e, s in rows:
                w.writerow([idx, h, repr(e), repr(s)])
        return path


@dataclass(frozen=True)
class ShotEstimate:
    n_ungrouped: float
    r_hat: float
    n_shots: float


def estimate_required_shots(h: PauliHamiltonian, expectations: Sequence[float] | np.ndarray | Callable,
                            epsilon: float, formula: str = "exact") -> ShotEstimate:
    """Shots for a target energy error, with and without commuting-group measurement.

    ``expectations`` is a per-term expectation vector, a dense state, or a
    zero-argument callable returning either.
    """
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    if callable(expectations):
        expectations = expectations()
    values = _dense(expectations)
    if values.shape == (len(h.terms),) and np.isrealobj(values):
        exp = values.astype(float)
    else:
        exp = pauli_expectations(values, h)
    var = pauli_variances(exp, formula)
    n_ungrouped = shots_ungrouped(h, var, epsilon)
    rh = r_hat(sorted_insertion(h), h)
    return ShotEstimate(n_ungrouped, rh, n_ungrouped / rh)
