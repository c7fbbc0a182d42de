"""Dense statevector simulation of the periodic entangler ansatz.

Basis index bit ``n-1-q`` holds qubit ``q`` (qubit 0 most significant), the
same convention as :meth:`vqsls.pauli.PauliHamiltonian.to_sparse`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as sla

from .errors import DimensionError, DomainError, ResourceError
from .pauli import PauliHamiltonian, PauliString

MAX_QUBITS = 26
MAX_DENSE_EIG_QUBITS = 16

_I2 = np.eye(2, dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]])
_Z = np.diag([1.0 + 0j, -1.0])


def entangler_generator(sign: str = "minus") -> np.ndarray:
    """4x4 generator ``Y⊗Z ± Z⊗Y`` on (first, second) qubit of a gate."""
    if sign == "minus":
        return np.kron(_Y, _Z) - np.kron(_Z, _Y)
    if sign == "plus":
        return np.kron(_Y, _Z) + np.kron(_Z, _Y)
    raise DomainError(f"generator sign must be 'plus' or 'minus', got {sign!r}")


def entangler_unitary(theta: float, sign: str = "minus") -> np.ndarray:
    # G is imaginary antisymmetric with eigenvalues ±2, 0, 0, so exp(-i theta G)
    # is real; the closed form avoids expm round-off.
    G = entangler_generator(sign)
    A = (-1j * G).real  # real antisymmetric, A^3 = -4 A
    return (np.eye(4) + np.sin(2 * theta) / 2 * A + (1 - np.cos(2 * theta)) / 4 * A @ A).astype(complex)


class StateVector:
    def __init__(self, amplitudes: np.ndarray, n_qubits: int | None = None):
        amplitudes = np.asarray(amplitudes, dtype=complex)
        if n_qubits is None:
            n_qubits = int(round(np.log2(amplitudes.size)))
        if n_qubits > MAX_QUBITS:
            raise ResourceError(f"{n_qubits} qubits exceeds the {MAX_QUBITS}-qubit guard")
        if amplitudes.size != 1 << n_qubits:
            raise DimensionError(f"{amplitudes.size} amplitudes for {n_qubits} qubits")
        self.amplitudes = amplitudes
        self.n_qubits = n_qubits

    @classmethod
    def zeros(cls, n_qubits: int) -> "StateVector":
        if n_qubits > MAX_QUBITS:
            raise ResourceError(f"{n_qubits} qubits exceeds the {MAX_QUBITS}-qubit guard")
        psi = np.zeros(1 << n_qubits, dtype=complex)
        psi[0] = 1.0
        return cls(psi, n_qubits)

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.n_qubits)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def apply_two_qubit(self, i: int, j: int, u: np.ndarray) -> "StateVector":
        """Apply a 4x4 unitary with ``i`` as its first qubit, in place."""
        n = self.n_qubits
        if i == j:
            raise DomainError("two-qubit gate needs distinct qubits")
        if not (0 <= i < n and 0 <= j < n):
            raise DomainError(f"qubits ({i}, {j}) outside 0..{n - 1}")
        t = self.amplitudes.reshape((2,) * n)
        t = np.moveaxis(t, (i, j), (0, 1))
        shape = t.shape
        t = (u @ t.reshape(4, -1)).reshape(shape)
        self.amplitudes = np.ascontiguousarray(np.moveaxis(t, (0, 1), (i, j))).reshape(-1)
        return self

    def to_bytes(self) -> bytes:
        """Little-endian complex64 dump for debugging."""
        return self.amplitudes.astype("<c8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "StateVector":
        return cls(np.frombuffer(data, dtype="<c8").astype(complex))


def apply_entangler(state: StateVector, i: int, j: int, theta: float, sign: str = "minus") -> StateVector:
    return state.apply_two_qubit(i, j, entangler_unitary(theta, sign))


@dataclass(frozen=True)
class EntanglerAnsatz:
    """Four shared-angle layers: even bonds, odd bonds (periodic), even, odd."""

    n_sites: int
    generator_sign: str = "minus"
    periodic: bool = True

    def __post_init__(self):
        if self.n_sites < 2 or self.n_sites % 2:
            raise DomainError(f"n_sites must be even and >= 2, got {self.n_sites}")
        entangler_generator(self.generator_sign)

    @property
    def n_params(self) -> int:
        return 4

    def even_bonds(self) -> list[tuple[int, int]]:
        return [(2 * k, 2 * k + 1) for k in range(self.n_sites // 2)]

    def odd_bonds(self) -> list[tuple[int, int]]:
        n = self.n_sites
        bonds = [(2 * k + 1, 2 * k + 2) for k in range(n // 2 - 1)]
        if self.periodic:
            bonds.append((n - 1, 0))
        return bonds

    def layers(self, params: Sequence[float]) -> list[tuple[float, list[tuple[int, int]]]]:
        params = np.asarray(params, dtype=float)
        if params.shape != (4,):
            raise DimensionError(f"ansatz takes 4 parameters, got {params.shape}")
        even, odd = self.even_bonds(), self.odd_bonds()
        return [(params[0], even), (params[1], odd), (params[2], even), (params[3], odd)]


def prepare_ansatz_state(a: EntanglerAnsatz, params: Sequence[float]) -> StateVector:
    state = StateVector.zeros(a.n_sites)
    for theta, bonds in a.layers(params):
        u = entangler_unitary(theta, a.generator_sign)
        for i, j in bonds:
            state.apply_two_qubit(i, j, u)
    return state


def _parity(a: np.ndarray) -> np.ndarray:
    return (np.bitwise_count(a) & 1).astype(np.int8)


def apply_pauli(amplitudes: np.ndarray, p: PauliString) -> np.ndarray:
    """Return ``P|psi>`` for a dense amplitude vector."""
    n = p.n_qubits
    if amplitudes.size != 1 << n:
        raise DimensionError(f"state has {amplitudes.size} amplitudes, string {n} qubits")
    x, z = p.masks()
    idx = np.arange(amplitudes.size, dtype=np.int64)
    ny = bin(x & z).count("1")
    phase = (1j) ** ny * (1 - 2 * _parity(idx & z))
    out = np.empty(amplitudes.shape, dtype=np.result_type(amplitudes, phase))
    out[idx ^ x] = phase * amplitudes
    return out


def pauli_expectations(amplitudes: np.ndarray, h: PauliHamiltonian) -> np.ndarray:
    """``<psi|P_i|psi>`` for every term, real parts."""
    amplitudes = np.asarray(amplitudes)
    vals = np.empty(len(h.terms))
    for k, t in enumerate(h.terms):
        v = np.vdot(amplitudes, apply_pauli(amplitudes, t.string))
        if abs(v.imag) > 1e-9:
            raise ValueError(f"complex expectation {v} for Hermitian {t.string}")
        vals[k] = v.real
    return vals


def expectation(state: StateVector | np.ndarray, h: PauliHamiltonian) -> float:
    amps = state.amplitudes if isinstance(state, StateVector) else np.asarray(state)
    if amps.size != 1 << h.n_qubits:
        raise DimensionError(f"state size {amps.size} vs {h.n_qubits}-qubit Hamiltonian")
    return float(np.dot(h.coefficients, pauli_expectations(amps, h)))


def exact_ground_energy(h: PauliHamiltonian, dense_limit: int = MAX_DENSE_EIG_QUBITS) -> float:
    if h.n_qubits > dense_limit:
        raise ResourceError(f"{h.n_qubits} qubits exceeds exact-diagonalization limit {dense_limit}")
    m = h.to_sparse()
    if h.n_qubits <= 10:
        return float(la.eigvalsh(m.toarray())[0])
    vals = sla.eigsh(m, k=1, which="SA", tol=1e-12, return_eigenvectors=False)
    return float(vals[0])


class StatevectorCost:
    """Noiseless ansatz energy ``<V(theta)|H|V(theta)>``."""

    def __init__(self, ansatz: EntanglerAnsatz, h: PauliHamiltonian):
        if h.n_qubits != ansatz.n_sites:
            raise DimensionError("Hamiltonian and ansatz sizes differ")
        self.ansatz = ansatz
        self.h = h

    def state(self, params) -> np.ndarray:
        return prepare_ansatz_state(self.ansatz, params).amplitudes

    def __call__(self, params) -> float:
        return expectation(self.state(params), self.h)
