"""Pauli strings, qubit Hamiltonians, commuting-set grouping and shot estimates.

Qubit 0 is the left-most character of an axes string and the most significant
bit of a computational-basis index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, DomainError, ParseError

_AXES = frozenset("IXYZ")


@dataclass(frozen=True, order=True)
class PauliString:
    axes: str

    def __post_init__(self):
        if not self.axes:
            raise DomainError("a Pauli string needs at least one qubit")
        bad = set(self.axes) - _AXES
        if bad:
            raise DomainError(f"invalid Pauli axes {sorted(bad)} in {self.axes!r}")

    @property
    def n_qubits(self) -> int:
        return len(self.axes)

    @property
    def weight(self) -> int:
        return sum(a != "I" for a in self.axes)

    def is_identity(self) -> bool:
        return self.weight == 0

    def masks(self) -> tuple[int, int]:
        """Symplectic (x, z) bit masks; qubit q maps to bit n-1-q."""
        x = z = 0
        n = len(self.axes)
        for q, a in enumerate(self.axes):
            bit = 1 << (n - 1 - q)
            if a in "XY":
                x |= bit
            if a in "ZY":
                z |= bit
        return x, z

    def __str__(self):
        return self.axes


@dataclass(frozen=True)
class PauliTerm:
    coefficient: float
    string: PauliString

    def __post_init__(self):
        if not math.isfinite(self.coefficient):
            raise DomainError(f"non-finite coefficient {self.coefficient}")


class PauliHamiltonian:
    """Weighted sum of Pauli strings. Duplicate strings are merged and exact
    zeros dropped on construction; term order follows first appearance."""

    def __init__(self, terms: Iterable[PauliTerm | tuple[float, str]], n_qubits: int | None = None):
        merged: dict[PauliString, float] = {}
        for t in terms:
            if not isinstance(t, PauliTerm):
                c, s = t
                t = PauliTerm(float(c), s if isinstance(s, PauliString) else PauliString(s))
            if n_qubits is None:
                n_qubits = t.string.n_qubits
            if t.string.n_qubits != n_qubits:
                raise DimensionError(
                    f"term {t.string} has {t.string.n_qubits} qubits, expected {n_qubits}")
            merged[t.string] = merged.get(t.string, 0.0) + t.coefficient
        if n_qubits is None or n_qubits < 1:
            raise DomainError("n_qubits must be given for an empty Hamiltonian")
        self.n_qubits = n_qubits
        self.terms = tuple(PauliTerm(c, s) for s, c in merged.items() if c != 0.0)

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __repr__(self):
        return f"PauliHamiltonian(n_qubits={self.n_qubits}, n_terms={len(self.terms)})"

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([t.coefficient for t in self.terms])

    @property
    def identity_coefficient(self) -> float:
        return sum(t.coefficient for t in self.terms if t.string.is_identity())

    def non_identity_indices(self) -> list[int]:
        return [i for i, t in enumerate(self.terms) if not t.string.is_identity()]

    def pruned(self, atol: float) -> "PauliHamiltonian":
        return PauliHamiltonian((t for t in self.terms if abs(t.coefficient) > atol), self.n_qubits)

    def to_sparse(self) -> sp.csr_matrix:
        """Sparse 2^n x 2^n matrix of the Hamiltonian."""
        n = self.n_qubits
        dim = 1 << n
        idx = np.arange(dim, dtype=np.int64)
        rows, cols, vals = [], [], []
        for t in self.terms:
            x, z = t.string.masks()
            ny = bin(x & z).count("1")
            parity = _popcount_parity(idx & z)
            phase = (1j) ** ny * (1 - 2 * parity)
            # P|col> = phase(col)|col ^ x>
            rows.append(idx ^ x)
            cols.append(idx)
            vals.append(t.coefficient * phase)
        if not rows:
            return sp.csr_matrix((dim, dim), dtype=complex)
        m = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(dim, dim))
        return m.tocsr()

    # line-oriented text format: "coefficient<TAB>axes"
    def to_text(self) -> str:
        lines = [f"# n_qubits={self.n_qubits}"]
        lines += [f"{t.coefficient!r}\t{t.string.axes}" for t in self.terms]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PauliHamiltonian":
        terms = []
        n_qubits = None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if line.startswith("#"):
                if line.startswith("# n_qubits="):
                    n_qubits = int(line.split("=", 1)[1])
                continue
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"expected 'coefficient<TAB>axes', got {raw!r}", lineno)
            try:
                c = float(parts[0])
                s = PauliString(parts[1])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            terms.append(PauliTerm(c, s))
        return cls(terms, n_qubits)


def _popcount_parity(a: np.ndarray) -> np.ndarray:
    a = a.copy()
    parity = np.zeros_like(a)
    while np.any(a):
        parity ^= a & 1
        a >>= 1
    return parity


def commutes(p: PauliString, q: PauliString) -> bool:
    """Full (not qubit-wise) commutation of two Pauli strings."""
    if p.n_qubits != q.n_qubits:
        raise DimensionError(f"{p.n_qubits} vs {q.n_qubits} qubits")
    clashes = sum(a != "I" and b != "I" and a != b for a, b in zip(p.axes, q.axes))
    return clashes % 2 == 0


def _commutes_masks(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return bin((a[0] & b[1]) ^ (a[1] & b[0])).count("1") % 2 == 0


def build_ising_hamiltonian(n_sites: int, j1: float, j2: float, ht: float) -> PauliHamiltonian:
    """Periodic chain ``j1*sum Z_i Z_{i+1} + j2*sum Z_i Z_{i+2} + ht*sum X_i``.

    For ``n_sites == 4`` the next-nearest-neighbour bonds coincide pairwise
    under the wrap and are merged into two terms of weight ``2*j2``.
    """
    if n_sites < 4:
        raise DomainError(f"n_sites must be >= 4, got {n_sites}")

    def string(ops: dict[int, str]) -> str:
        return "".join(ops.get(q, "I") for q in range(n_sites))

    terms = []
    for i in range(n_sites):
        terms.append((j1, string({i: "Z", (i + 1) % n_sites: "Z"})))
    for i in range(n_sites):
        terms.append((j2, string({i: "Z", (i + 2) % n_sites: "Z"})))
    for i in range(n_sites):
        terms.append((ht, string({i: "X"})))
    return PauliHamiltonian(terms, n_sites)


@dataclass(frozen=True)
class MeasurementGrouping:
    groups: tuple[tuple[int, ...], ...]
    r_hat: float = field(default=1.0)

    def __len__(self):
        return len(self.groups)


def sorted_insertion(h: PauliHamiltonian) -> MeasurementGrouping:
    """Greedy grouping of non-identity terms into fully commuting sets.

    Terms are visited by decreasing |coefficient| (ties: lexicographic axes)
    and placed in the first group they commute with term-by-term.
    """
    order = sorted(h.non_identity_indices(),
                   key=lambda i: (-abs(h.terms[i].coefficient), h.terms[i].string.axes))
    masks = {i: h.terms[i].string.masks() for i in order}
    groups: list[list[int]] = []
    for i in order:
        for g in groups:
            if all(_commutes_masks(masks[i], masks[j]) for j in g):
                g.append(i)
                break
        else:
            groups.append([i])
    grouping = MeasurementGrouping(tuple(tuple(g) for g in groups))
    if groups:
        grouping = MeasurementGrouping(grouping.groups, r_hat(grouping, h))
    return grouping


def pauli_variances(expectations: Sequence[float], formula: str = "exact") -> np.ndarray:
    """Per-term variance of ±1-valued observables.

    ``exact`` gives 1 - <P>^2; ``linear`` gives the cruder 1 - <P>, which can
    exceed 1 for negative expectations.
    """
    e = np.asarray(expectations, dtype=float)
    if formula == "exact":
        return np.clip(1.0 - e ** 2, 0.0, None)
    if formula == "linear":
        return 1.0 - e
    raise DomainError(f"unknown variance formula {formula!r}")


def shots_ungrouped(h: PauliHamiltonian, var: Sequence[float], epsilon: float) -> float:
    if epsilon <= 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    var = np.asarray(var, dtype=float)
    if var.shape != (len(h.terms),):
        raise DimensionError(f"need {len(h.terms)} variances, got {var.shape}")
    a = np.abs(h.coefficients)
    ident = np.array([t.string.is_identity() for t in h.terms], dtype=bool)
    s = float(np.sum(np.where(ident, 0.0, a * np.sqrt(np.clip(var, 0.0, None)))))
    return s * s / epsilon ** 2


def r_hat(grouping: MeasurementGrouping, h: PauliHamiltonian) -> float:
    if not grouping.groups:
        raise DomainError("empty grouping")
    coeffs = h.coefficients
    num = sum(np.sum(np.abs(coeffs[list(g)])) for g in grouping.groups)
    den = sum(math.sqrt(float(np.sum(coeffs[list(g)] ** 2))) for g in grouping.groups)
    return float((num / den) ** 2)
