"""Sparse wavefunction simulator for factorized UCCSD over Slater determinants.

A determinant is stored as one integer: bit ``p`` set means spin orbital
``p`` is occupied, alpha orbitals occupy bits ``0..n_orb-1`` and beta orbitals
bits ``n_orb..2*n_orb-1``. Fermionic signs count occupied orbitals of lower
index, matching the Jordan-Wigner ordering in :mod:`vqsls.fermion`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import product
from typing import NamedTuple, Sequence

import numpy as np

from .chem_io import MolecularIntegrals, Mp2Guess, mp2_amplitudes
from .errors import DimensionError, DomainError


class Determinant(NamedTuple):
    alpha: int
    beta: int

    def key(self, n_orb: int) -> int:
        return self.alpha | (self.beta << n_orb)

    @classmethod
    def from_key(cls, key: int, n_orb: int) -> "Determinant":
        return cls(key & ((1 << n_orb) - 1), key >> n_orb)


def reference_key(n_orb: int, n_elec: int) -> int:
    """Closed-shell reference: lowest ``n_elec/2`` spatial orbitals doubly occupied."""
    n_occ = n_elec // 2
    occ = (1 << n_occ) - 1
    return occ | (occ << n_orb)


@dataclass
class SparseWavefunction:
    amplitudes: dict[int, float]
    n_orb: int
    n_elec: int

    def __len__(self):
        return len(self.amplitudes)

    def norm(self) -> float:
        return math.sqrt(math.fsum(a * a for a in self.amplitudes.values()))

    def determinants(self) -> list[Determinant]:
        return [Determinant.from_key(k, self.n_orb) for k in sorted(self.amplitudes)]

    def to_statevector(self) -> np.ndarray:
        """Dense amplitudes in the qubit basis (spin orbital p on qubit p, qubit 0 most significant)."""
        nq = 2 * self.n_orb
        if nq > 26:
            raise DomainError(f"{nq} qubits is too many for a dense vector")
        out = np.zeros(1 << nq, dtype=complex)
        for key, amp in self.amplitudes.items():
            idx = int(f"{key:0{nq}b}"[::-1], 2)
            out[idx] = amp
        return out

    def dump(self) -> str:
        """``bitstring amplitude`` lines; the bitstring lists spin orbitals 0..2n-1."""
        nq = 2 * self.n_orb
        return "".join(f"{f'{k:0{nq}b}'[::-1]} {self.amplitudes[k]:.16e}\n"
                       for k in sorted(self.amplitudes))


@dataclass(frozen=True)
class UccFactor:
    kind: str  # "single" | "double"
    occ: tuple[int, ...]
    virt: tuple[int, ...]
    param_index: int

    def __post_init__(self):
        size = {"single": 1, "double": 2}.get(self.kind)
        if size is None:
            raise DomainError(f"unknown factor kind {self.kind!r}")
        if len(self.occ) != size or len(self.virt) != size:
            raise DomainError(f"{self.kind} factor needs {size} occupied and virtual indices")
        if set(self.occ) & set(self.virt) or len(set(self.occ)) != size or len(set(self.virt)) != size:
            raise DomainError(f"overlapping indices in {self}")

    def spins(self, n_orb: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return tuple(p // n_orb for p in self.occ), tuple(p // n_orb for p in self.virt)

    def _ops(self):
        # T = a+_a a+_b a_j a_i, applied right to left
        if self.kind == "single":
            (i,), (a,) = self.occ, self.virt
            return ((i, False), (a, True))
        (i, j), (a, b) = self.occ, self.virt
        return ((i, False), (j, False), (b, True), (a, True))


def _apply_ops(key: int, ops) -> tuple[int, int]:
    """Apply a ladder-operator string; returns (new_key, sign) or (key, 0) if annihilated."""
    sign = 1
    for p, create in ops:
        bit = 1 << p
        occupied = bool(key & bit)
        if occupied == create:
            return key, 0
        if bin(key & (bit - 1)).count("1") & 1:
            sign = -sign
        key ^= bit
    return key, sign


def apply_factor(psi: SparseWavefunction, f: UccFactor, theta: float) -> SparseWavefunction:
    """Apply ``exp(theta * (T - T^dagger))`` as Givens rotations on connected determinant pairs."""
    n_spin = 2 * psi.n_orb
    if max(f.occ + f.virt) >= n_spin or min(f.occ + f.virt) < 0:
        raise DomainError(f"factor {f} outside {n_spin} spin orbitals")
    if theta == 0.0:
        return SparseWavefunction(dict(psi.amplitudes), psi.n_orb, psi.n_elec)
    occ_mask = sum(1 << p for p in f.occ)
    virt_mask = sum(1 << p for p in f.virt)
    ops = f._ops()
    c, s = math.cos(theta), math.sin(theta)
    amps = psi.amplitudes
    out = dict(amps)
    done = set()
    for key in amps:
        if key & occ_mask == occ_mask and not key & virt_mask:
            src = key
        elif key & virt_mask == virt_mask and not key & occ_mask:
            src = key ^ occ_mask ^ virt_mask
        else:
            continue
        if src in done:
            continue
        done.add(src)
        tgt, sign = _apply_ops(src, ops)
        a_src = amps.get(src, 0.0)
        a_tgt = amps.get(tgt, 0.0)
        new_src = c * a_src - sign * s * a_tgt
        new_tgt = c * a_tgt + sign * s * a_src
        for k, v in ((src, new_src), (tgt, new_tgt)):
            if v == 0.0:
                out.pop(k, None)
            else:
                out[k] = v
    return SparseWavefunction(out, psi.n_orb, psi.n_elec)


def truncate(psi: SparseWavefunction, n_cut: int | None, n_max: int | None) -> SparseWavefunction:
    """Keep the ``n_cut`` largest amplitudes once more than ``n_max`` are stored."""
    if n_max is None or len(psi.amplitudes) <= n_max:
        return psi
    if n_cut is None or n_cut > n_max:
        raise DomainError(f"n_cut={n_cut} must not exceed n_max={n_max}")
    ranked = sorted(psi.amplitudes.items(), key=lambda kv: (-abs(kv[1]), kv[0]))[:n_cut]
    norm = math.sqrt(math.fsum(v * v for _, v in ranked))
    return SparseWavefunction({k: v / norm for k, v in ranked}, psi.n_orb, psi.n_elec)


@dataclass
class UccAnsatz:
    factors: tuple[UccFactor, ...]
    n_orb: int
    n_elec: int
    params: np.ndarray = field(default=None)
    n_cut: int | None = None
    n_max: int | None = None
    reference: int | None = None

    def __post_init__(self):
        self.factors = tuple(self.factors)
        idx = sorted({f.param_index for f in self.factors})
        if idx != list(range(len(idx))):
            raise DomainError("param_index values must cover 0..N_PAR-1")
        if self.params is None:
            self.params = np.zeros(self.n_par)
        self.params = np.asarray(self.params, dtype=float)
        if self.reference is None:
            self.reference = reference_key(self.n_orb, self.n_elec)
        if self.n_max is not None and self.n_cut is not None and self.n_cut > self.n_max:
            raise DomainError("n_cut must not exceed n_max")

    @property
    def n_par(self) -> int:
        return len({f.param_index for f in self.factors})

    def to_dict(self) -> dict:
        return {
            "n_orb": self.n_orb, "n_elec": self.n_elec,
            "n_cut": self.n_cut, "n_max": self.n_max, "reference": self.reference,
            "factors": [{"kind": f.kind, "occ": list(f.occ), "virt": list(f.virt),
                         "param_index": f.param_index} for f in self.factors],
            "params": [float(x) for x in self.params],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UccAnsatz":
        factors = [UccFactor(f["kind"], tuple(f["occ"]), tuple(f["virt"]), f["param_index"])
                   for f in d["factors"]]
        return cls(factors, d["n_orb"], d["n_elec"], np.array(d["params"]),
                   d.get("n_cut"), d.get("n_max"), d.get("reference"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def prepare_state(ansatz: UccAnsatz, params: Sequence[float] | None = None,
                  truncated: bool = True) -> SparseWavefunction:
    params = ansatz.params if params is None else np.asarray(params, dtype=float)
    if params.shape != (ansatz.n_par,):
        raise DimensionError(f"expected {ansatz.n_par} parameters, got {params.shape}")
    psi = SparseWavefunction({ansatz.reference: 1.0}, ansatz.n_orb, ansatz.n_elec)
    for f in ansatz.factors:
        psi = apply_factor(psi, f, float(params[f.param_index]))
        if truncated:
            psi = truncate(psi, ansatz.n_cut, ansatz.n_max)
    return psi


class SlaterCondon:
    """Hamiltonian matrix elements between determinants, with a pair cache."""

    def __init__(self, m: MolecularIntegrals):
        n = m.n_orb
        self.m = m
        self.n_orb = n
        N = 2 * n
        spin = np.arange(N) // n
        sp = np.arange(N) % n
        same = spin[:, None] == spin[None, :]
        self.h = np.where(same, m.h1[np.ix_(sp, sp)], 0.0)
        # <pq|rs> = (pr|qs) delta(sp,sr) delta(sq,ss)
        g = m.eri[np.ix_(sp, sp, sp, sp)].transpose(0, 2, 1, 3)
        mask = same[:, None, :, None] & same[None, :, None, :]
        phys = np.where(mask, g, 0.0)
        self.asym = phys - phys.transpose(0, 1, 3, 2)
        self._cache: dict[tuple[int, int], float] = {}

    def element(self, k1: int, k2: int) -> float:
        if k1 > k2:
            k1, k2 = k2, k1
        hit = self._cache.get((k1, k2))
        if hit is None:
            hit = self._element(k1, k2)
            self._cache[(k1, k2)] = hit
        return hit

    def _element(self, k1: int, k2: int) -> float:
        occ = [p for p in range(2 * self.n_orb) if k1 >> p & 1]
        diff = k1 ^ k2
        n_diff = bin(diff).count("1")
        if n_diff == 0:
            o = np.array(occ)
            return float(np.trace(self.h[np.ix_(o, o)])
                         + 0.5 * np.einsum("ijij->", self.asym[np.ix_(o, o, o, o)]))
        removed = [p for p in range(2 * self.n_orb) if (k1 & ~k2) >> p & 1]
        added = [p for p in range(2 * self.n_orb) if (k2 & ~k1) >> p & 1]
        if n_diff == 2:
            (i,), (a,) = removed, added
            _, sign = _apply_ops(k1, ((i, False), (a, True)))
            return sign * float(self.h[a, i] + sum(self.asym[a, j, i, j] for j in occ))
        if n_diff == 4:
            (i, j), (a, b) = removed, added
            _, sign = _apply_ops(k1, ((i, False), (j, False), (b, True), (a, True)))
            return sign * float(self.asym[a, b, i, j])
        return 0.0

    def energy(self, psi: SparseWavefunction) -> float:
        if psi.n_orb != self.n_orb:
            raise DimensionError(f"wavefunction has {psi.n_orb} orbitals, integrals {self.n_orb}")
        keys = sorted(psi.amplitudes)
        c = np.array([psi.amplitudes[k] for k in keys])
        karr = np.array(keys, dtype=np.int64)
        diag = np.array([self.element(k, k) for k in keys])
        e = float(np.dot(c * c, diag))
        if len(keys) > 1:
            nd = np.bitwise_count(karr[:, None] ^ karr[None, :])
            ii, jj = np.nonzero(np.triu(nd <= 4, k=1))
            off = np.array([self.element(keys[i], keys[j]) for i, j in zip(ii, jj)])
            e += 2.0 * float(np.dot(c[ii] * c[jj], off)) if len(off) else 0.0
        return e + self.m.e_core


def energy(psi: SparseWavefunction, m: MolecularIntegrals) -> float:
    return SlaterCondon(m).energy(psi)


def _irrep(label: int) -> int:
    return label - 1


def select_operators(guess: Mp2Guess, n_doubles: int | None, orbsym: Sequence[int],
                     n_orb: int | None = None) -> list[UccFactor]:
    """MP2-ordered doubles (largest |t2| first, at most ``n_doubles``) then singles.

    Spatial amplitudes map to spin orbitals as: opposite spin ``t2[i,j,a,b]``,
    same spin ``t2[i,j,a,b] - t2[i,j,b,a]``. Excitations whose irrep product
    (XOR of zero-based labels) is not totally symmetric are removed.
    """
    n = len(orbsym) if n_orb is None else n_orb
    n_occ = guess.n_occ
    occ = range(n_occ)
    vir = range(n_occ, n)
    sym = [_irrep(l) for l in orbsym]

    def allowed(*orbs):
        x = 0
        for p in orbs:
            x ^= sym[p]
        return x == 0

    t2 = guess.t2
    doubles = []
    for i, j, a, b in product(occ, occ, vir, vir):
        if not allowed(i, j, a, b):
            continue
        doubles.append((t2.get((i, j, a, b), 0.0), (i, j + n), (a, b + n)))
        if i < j and a < b:
            amp = t2.get((i, j, a, b), 0.0) - t2.get((i, j, b, a), 0.0)
            for s in (0, n):
                doubles.append((amp, (i + s, j + s), (a + s, b + s)))
    doubles.sort(key=lambda d: (-abs(d[0]), d[1], d[2]))
    if n_doubles is not None:
        doubles = doubles[:n_doubles]

    factors = [UccFactor("double", o, v, k) for k, (_, o, v) in enumerate(doubles)]
    for s in (0, n):
        for i in occ:
            for a in vir:
                if allowed(i, a):
                    factors.append(UccFactor("single", (i + s,), (a + s,), len(factors)))
    return factors


def initial_parameters(factors: Sequence[UccFactor], guess: Mp2Guess, n_orb: int) -> np.ndarray:
    """MP2 amplitudes for doubles, zero for singles."""
    params = np.zeros(len({f.param_index for f in factors}))
    for f in factors:
        if f.kind != "double":
            continue
        (i, j), (a, b) = f.occ, f.virt
        si, sj = i // n_orb, j // n_orb
        i, j, a, b = i % n_orb, j % n_orb, a % n_orb, b % n_orb
        if si != sj:
            amp = guess.t2.get((i, j, a, b), 0.0)
        else:
            amp = guess.t2.get((i, j, a, b), 0.0) - guess.t2.get((i, j, b, a), 0.0)
        params[f.param_index] = amp
    return params


def build_uccsd_ansatz(m: MolecularIntegrals, n_doubles: int | None = None,
                       n_cut: int | None = None, n_max: int | None = None) -> UccAnsatz:
    guess = mp2_amplitudes(m)
    factors = select_operators(guess, n_doubles, m.orbsym, m.n_orb)
    return UccAnsatz(factors, m.n_orb, m.n_elec, initial_parameters(factors, guess, m.n_orb),
                     n_cut, n_max)


class SwsCost:
    """Energy of a UCCSD ansatz as a function of its parameters."""

    def __init__(self, ansatz: UccAnsatz, m: MolecularIntegrals, truncated: bool = True):
        self.ansatz = ansatz
        self.truncated = truncated
        self.sc = SlaterCondon(m)

    def state(self, params) -> SparseWavefunction:
        return prepare_state(self.ansatz, params, truncated=self.truncated)

    def __call__(self, params) -> float:
        return self.sc.energy(self.state(params))
