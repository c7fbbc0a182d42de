"""Open-boundary matrix product states with a capped bond dimension.

Tensors have shape (left bond, physical 2, right bond). Physical index 0 is
|0>, matching the statevector convention. Gates on the wrap bond of a
periodic chain are routed with swap gates.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DimensionError, DomainError
from .pauli import PauliHamiltonian
from .spin_sim import EntanglerAnsatz, entangler_unitary

SVD_CUTOFF = 1e-12

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1.0 + 0j, -1.0]),
}
SWAP = np.eye(4, dtype=complex)[[0, 2, 1, 3]]


class MpsState:
    def __init__(self, tensors: list[np.ndarray], max_bond: int, center: int = 0,
                 truncation_threshold: float = SVD_CUTOFF):
        if max_bond < 1:
            raise DomainError("max_bond must be positive")
        self.tensors = tensors
        self.max_bond = max_bond
        self.center = center
        self.truncation_threshold = truncation_threshold
        self.discarded_weight = 0.0
        self.gate_discards: list[float] = []

    @classmethod
    def product_state(cls, n_sites: int, max_bond: int, bits: Sequence[int] | None = None) -> "MpsState":
        bits = [0] * n_sites if bits is None else list(bits)
        tensors = []
        for b in bits:
            t = np.zeros((1, 2, 1), dtype=complex)
            t[0, b, 0] = 1.0
            tensors.append(t)
        return cls(tensors, max_bond)

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    def copy(self) -> "MpsState":
        out = MpsState([t.copy() for t in self.tensors], self.max_bond, self.center,
                       self.truncation_threshold)
        out.discarded_weight = self.discarded_weight
        out.gate_discards = list(self.gate_discards)
        return out

    # gauge moves
    def _shift_right(self, k: int):
        t = self.tensors[k]
        l, d, r = t.shape
        q, rr = np.linalg.qr(t.reshape(l * d, r))
        self.tensors[k] = q.reshape(l, d, -1)
        self.tensors[k + 1] = np.tensordot(rr, self.tensors[k + 1], axes=(1, 0))

    def _shift_left(self, k: int):
        t = self.tensors[k]
        l, d, r = t.shape
        q, rr = np.linalg.qr(t.reshape(l, d * r).T)
        self.tensors[k] = q.T.reshape(-1, d, r)
        self.tensors[k - 1] = np.tensordot(self.tensors[k - 1], rr.T, axes=(2, 0))

    def move_center(self, site: int):
        while self.center < site:
            self._shift_right(self.center)
            self.center += 1
        while self.center > site:
            self._shift_left(self.center)
            self.center -= 1

    def norm(self) -> float:
        env = np.ones((1, 1), dtype=complex)
        for t in self.tensors:
            env = np.einsum("ab,asc,bsd->cd", env, t.conj(), t)
        return float(np.sqrt(abs(env[0, 0])))

    def to_statevector(self) -> np.ndarray:
        psi = self.tensors[0]
        for t in self.tensors[1:]:
            psi = np.tensordot(psi, t, axes=(psi.ndim - 1, 0))
        return psi.reshape(-1)


def apply_two_site_gate(mps: MpsState, i: int, u: np.ndarray, j: int | None = None) -> MpsState:
    """Apply a 4x4 gate to sites (i, i+1); the gate's first qubit is site i.

    Truncates to ``max_bond`` singular values (dropping those below the
    cutoff) and renormalizes; the discarded weight is recorded.
    """
    n = mps.n_sites
    if j is not None and j != i + 1:
        raise DomainError(f"sites ({i}, {j}) are not adjacent; route with swaps")
    if not 0 <= i < n - 1:
        raise DomainError(f"site {i} has no right neighbour in a {n}-site chain")
    mps.move_center(i)
    a, b = mps.tensors[i], mps.tensors[i + 1]
    theta = np.tensordot(a, b, axes=(2, 0))  # l, s1, s2, r
    g = u.reshape(2, 2, 2, 2)
    theta = np.einsum("abcd,lcdr->labr", g, theta)
    l, _, _, r = theta.shape
    U, S, Vh = np.linalg.svd(theta.reshape(l * 2, 2 * r), full_matrices=False)
    total = float(np.sum(S ** 2))
    keep = int(np.sum(S > mps.truncation_threshold * max(S[0], 1e-300)))
    keep = max(1, min(keep, mps.max_bond))
    kept = float(np.sum(S[:keep] ** 2))
    discarded = max(0.0, (total - kept) / total)
    mps.discarded_weight += discarded
    mps.gate_discards.append(discarded)
    S = S[:keep] / np.sqrt(kept)
    mps.tensors[i] = U[:, :keep].reshape(l, 2, keep)
    mps.tensors[i + 1] = (S[:, None] * Vh[:keep]).reshape(keep, 2, r)
    mps.center = i + 1
    return mps


def apply_gate(mps: MpsState, i: int, j: int, u: np.ndarray) -> MpsState:
    """Apply a gate on arbitrary sites; non-adjacent pairs are swap-routed.

    Site ``j`` is carried next to ``i`` through swaps, the gate applied, and
    the swaps undone.
    """
    if i == j:
        raise DomainError("two-site gate needs distinct sites")
    if j == i + 1:
        return apply_two_site_gate(mps, i, u)
    if i == j + 1:
        return apply_two_site_gate(mps, j, SWAP @ u @ SWAP)
    if j < i:
        # carry j rightwards until it sits at i-1
        path = list(range(j, i - 1))
        for k in path:
            apply_two_site_gate(mps, k, SWAP)
        apply_two_site_gate(mps, i - 1, SWAP @ u @ SWAP)
        for k in reversed(path):
            apply_two_site_gate(mps, k, SWAP)
    else:
        # carry j leftwards until it sits at i+1
        path = list(range(j - 1, i, -1))
        for k in path:
            apply_two_site_gate(mps, k, SWAP)
        apply_two_site_gate(mps, i, u)
        for k in reversed(path):
            apply_two_site_gate(mps, k, SWAP)
    return mps


def _operator_schmidt(u: np.ndarray):
    """Split a 4x4 gate into ``sum_k A_k (x) B_k`` (A on the first qubit)."""
    m = u.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
    U, S, Vh = np.linalg.svd(m)
    r = max(1, int(np.sum(S > 1e-14 * S[0])))
    A = (U[:, :r] * S[:r]).T.reshape(r, 2, 2)
    B = Vh[:r].reshape(r, 2, 2)
    return A, B


def compress(mps: MpsState, lo: int = 0, hi: int | None = None) -> MpsState:
    """Left-canonicalize sites lo..hi then truncate bonds to ``max_bond`` sweeping back.

    Expects the orthogonality center inside [lo, hi].
    """
    hi = mps.n_sites - 1 if hi is None else hi
    if not lo <= mps.center <= hi:
        mps.move_center(lo)
    T = mps.tensors
    for k in range(lo, hi):
        l, d, r = T[k].shape
        q, rr = np.linalg.qr(T[k].reshape(l * d, r))
        T[k] = q.reshape(l, d, -1)
        T[k + 1] = np.tensordot(rr, T[k + 1], axes=(1, 0))
    for k in range(hi, lo, -1):
        l, d, r = T[k].shape
        U, S, Vh = np.linalg.svd(T[k].reshape(l, d * r), full_matrices=False)
        total = float(np.sum(S ** 2))
        keep = int(np.sum(S > mps.truncation_threshold * max(S[0], 1e-300)))
        keep = max(1, min(keep, mps.max_bond))
        kept = float(np.sum(S[:keep] ** 2))
        discarded = max(0.0, (total - kept) / total)
        mps.discarded_weight += discarded
        mps.gate_discards.append(discarded)
        T[k] = Vh[:keep].reshape(keep, d, r)
        T[k - 1] = np.tensordot(T[k - 1], U[:, :keep] * S[:keep], axes=(2, 0))
    T[lo] = T[lo] / np.linalg.norm(T[lo])
    mps.center = lo
    return mps


def apply_long_range_gate(mps: MpsState, i: int, j: int, u: np.ndarray) -> MpsState:
    """Apply a gate on non-adjacent sites as a rank-<=4 MPO, then compress once."""
    if i > j:
        i, j, u = j, i, SWAP @ u @ SWAP
    A, B = _operator_schmidt(u)
    r = A.shape[0]
    mps.move_center(i)
    T = mps.tensors
    l, d, rr = T[i].shape
    T[i] = np.einsum("kst,ltr->lsrk", A, T[i]).reshape(l, d, rr * r)
    eye = np.eye(r)
    for m in range(i + 1, j):
        l, d, rr = T[m].shape
        T[m] = np.einsum("lsr,kq->lksrq", T[m], eye).reshape(l * r, d, rr * r)
    l, d, rr = T[j].shape
    T[j] = np.einsum("kst,ltr->lksr", B, T[j]).reshape(l * r, d, rr)
    return compress(mps, i, j)


def _term_support(axes: str) -> tuple[int, int]:
    sites = [k for k, a in enumerate(axes) if a != "I"]
    return (sites[0], sites[-1]) if sites else (0, -1)


def mps_energy(mps: MpsState, h: PauliHamiltonian) -> float:
    """Sum of Pauli expectation values with the state in right-canonical form.

    Left environments of the identity are cached once; each term is then a
    contraction over its own support only.
    """
    n = mps.n_sites
    if h.n_qubits != n:
        raise DimensionError(f"{h.n_qubits}-qubit Hamiltonian on {n}-site MPS")
    mps.move_center(0)
    tensors = mps.tensors
    norm2 = float(np.einsum("asb,asb->", tensors[0].conj(), tensors[0]).real)
    envs = [np.ones((1, 1), dtype=complex)]
    for t in tensors[:-1]:
        envs.append(np.einsum("ab,asc,bsd->cd", envs[-1], t.conj(), t))
    total = 0.0
    for term in h.terms:
        lo, hi = _term_support(term.string.axes)
        if hi < lo:
            total += term.coefficient
            continue
        env = envs[lo]
        for k in range(lo, hi + 1):
            op = _PAULI[term.string.axes[k]]
            t = tensors[k]
            env = np.einsum("ab,asc,st,btd->cd", env, t.conj(), op, t)
        val = np.trace(env)
        total += term.coefficient * val.real
    return float(total / norm2)


ROUTINGS = ("swap", "mpo")


def ansatz_mps(a: EntanglerAnsatz, params: Sequence[float], chi: int,
               routing: str = "swap") -> MpsState:
    """Build the entangler circuit on an MPS; ``routing`` picks how the wrap gate is applied."""
    if routing not in ROUTINGS:
        raise DomainError(f"routing must be one of {ROUTINGS}, got {routing!r}")
    mps = MpsState.product_state(a.n_sites, chi)
    for theta, bonds in a.layers(params):
        u = entangler_unitary(theta, a.generator_sign)
        for i, j in bonds:
            if abs(i - j) > 1 and routing == "mpo":
                apply_long_range_gate(mps, i, j, u)
            else:
                apply_gate(mps, i, j, u)
    return mps


def mps_ansatz_energy(a: EntanglerAnsatz, params: Sequence[float], chi: int,
                      h: PauliHamiltonian, routing: str = "swap") -> float:
    return mps_energy(ansatz_mps(a, params, chi, routing), h)


class MpsCost:
    """Ansatz energy on a bond-dimension-capped MPS."""

    def __init__(self, ansatz: EntanglerAnsatz, h: PauliHamiltonian, chi: int,
                 routing: str = "swap"):
        if h.n_qubits != ansatz.n_sites:
            raise DimensionError("Hamiltonian and ansatz sizes differ")
        self.ansatz = ansatz
        self.h = h
        self.chi = chi
        self.routing = routing

    def __call__(self, params) -> float:
        return mps_ansatz_energy(self.ansatz, params, self.chi, self.h, self.routing)
