"""FCIDUMP integrals, closed-shell orbital energies and MP2 amplitudes.

Two-electron integrals are in chemist notation, ``eri[p, q, r, s] = (pq|rs)``.
"""
from __future__ import annotations

import io
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from itertools import product
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError, UnsupportedReferenceError

log = logging.getLogger(__name__)

MP2_DEGENERACY_THRESHOLD = 1e-8


@dataclass(frozen=True, eq=False)
class MolecularIntegrals:
    n_orb: int
    n_elec: int
    ms2: int
    orbsym: tuple[int, ...]
    h1: np.ndarray
    eri: np.ndarray
    e_core: float = 0.0
    isym: int = 1

    def __post_init__(self):
        if self.n_elec > 2 * self.n_orb:
            raise DomainError(f"{self.n_elec} electrons do not fit in {self.n_orb} orbitals")
        if self.h1.shape != (self.n_orb,) * 2 or self.eri.shape != (self.n_orb,) * 4:
            raise DomainError("integral arrays do not match n_orb")
        self.h1.setflags(write=False)
        self.eri.setflags(write=False)

    @property
    def n_occ(self) -> int:
        """Doubly occupied spatial orbitals of the closed-shell reference."""
        if self.n_elec % 2 or self.ms2 != 0:
            raise UnsupportedReferenceError(
                f"closed-shell reference required (NELEC={self.n_elec}, MS2={self.ms2})")
        return self.n_elec // 2


def _symmetrize_eri(eri, p, q, r, s, v):
    for a, b, c, d in ((p, q, r, s), (q, p, r, s), (p, q, s, r), (q, p, s, r),
                       (r, s, p, q), (s, r, p, q), (r, s, q, p), (s, r, q, p)):
        eri[a, b, c, d] = v


_NAMELIST_END = re.compile(r"(&END|/)\s*$", re.IGNORECASE)


def _parse_namelist(header: str, last_line: int) -> dict[str, list[str]]:
    body = re.sub(r"^\s*&FCI", "", header, flags=re.IGNORECASE)
    body = re.sub(r"(&END|/)\s*$", "", body.strip(), flags=re.IGNORECASE)
    out: dict[str, list[str]] = {}
    key = None
    for tok in re.split(r"[,\s]+", body):
        if not tok:
            continue
        if "=" in tok:
            key, _, val = tok.partition("=")
            key = key.strip().upper()
            out[key] = [val] if val else []
        elif key is not None:
            out[key].append(tok)
        else:
            raise ParseError(f"stray token {tok!r} in namelist", last_line)
    return out


def parse_fcidump(text: str | io.TextIOBase) -> MolecularIntegrals:
    if not isinstance(text, str):
        text = text.read()
    lines = text.splitlines()
    if not lines or not lines[0].lstrip().upper().startswith("&FCI"):
        raise ParseError("file must start with an &FCI namelist", 1)

    header = []
    body_start = None
    for i, line in enumerate(lines):
        header.append(line)
        if _NAMELIST_END.search(line.strip()):
            body_start = i + 1
            break
    if body_start is None:
        raise ParseError("unterminated &FCI namelist", len(lines))
    nml = _parse_namelist(" ".join(header), body_start)

    def scalar(key, required=True, default=None):
        if key not in nml or not nml[key]:
            if required:
                raise ParseError(f"namelist lacks {key}", body_start)
            return default
        try:
            return int(nml[key][0])
        except ValueError:
            raise ParseError(f"{key} is not an integer: {nml[key][0]!r}", body_start) from None

    n_orb = scalar("NORB")
    n_elec = scalar("NELEC")
    ms2 = scalar("MS2", required=False, default=0)
    isym = scalar("ISYM", required=False, default=1)
    if "ORBSYM" in nml and nml["ORBSYM"]:
        try:
            orbsym = tuple(int(v) for v in nml["ORBSYM"])
        except ValueError:
            raise ParseError("ORBSYM entries must be integers", body_start) from None
        if len(orbsym) != n_orb:
            raise ParseError(f"ORBSYM has {len(orbsym)} entries for NORB={n_orb}", body_start)
    else:
        orbsym = (1,) * n_orb

    h1 = np.zeros((n_orb, n_orb))
    eri = np.zeros((n_orb,) * 4)
    e_core = 0.0
    for lineno, line in enumerate(lines[body_start:], start=body_start + 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 5:
            raise ParseError(f"expected 'value i j k l', got {line.strip()!r}", lineno)
        try:
            value = float(parts[0].replace("D", "E").replace("d", "e"))
        except ValueError:
            raise ParseError(f"non-numeric value {parts[0]!r}", lineno) from None
        try:
            i, j, k, l = (int(x) for x in parts[1:])
        except ValueError:
            raise ParseError(f"non-integer index in {line.strip()!r}", lineno) from None
        if not all(0 <= x <= n_orb for x in (i, j, k, l)):
            raise ParseError(f"index out of range 0..{n_orb} in {line.strip()!r}", lineno)
        if i == j == k == l == 0:
            e_core = value
        elif k == l == 0:
            if i == 0 or j == 0:
                raise ParseError(f"one-body entry with zero index: {line.strip()!r}", lineno)
            h1[i - 1, j - 1] = h1[j - 1, i - 1] = value
        elif 0 in (i, j, k, l):
            # orbital-energy lines (i 0 0 0) are informational; skip
            if j == k == l == 0:
                continue
            raise ParseError(f"malformed index pattern in {line.strip()!r}", lineno)
        else:
            _symmetrize_eri(eri, i - 1, j - 1, k - 1, l - 1, value)
    return MolecularIntegrals(n_orb, n_elec, ms2, orbsym, h1, eri, e_core, isym)


def read_fcidump(path) -> MolecularIntegrals:
    return parse_fcidump(Path(path).read_text(encoding="utf-8"))


def write_fcidump(m: MolecularIntegrals, tol: float = 0.0) -> str:
    out = [f" &FCI NORB={m.n_orb},NELEC={m.n_elec},MS2={m.ms2},",
           "  ORBSYM=" + ",".join(str(s) for s in m.orbsym) + ",",
           f"  ISYM={m.isym},",
           " &END"]
    n = m.n_orb
    for p, q, r, s in product(range(n), repeat=4):
        pq, rs = p * n + q, r * n + s
        if p >= q and r >= s and pq >= rs and abs(m.eri[p, q, r, s]) > tol:
            out.append(f"{m.eri[p, q, r, s]:.16E} {p + 1:4d} {q + 1:4d} {r + 1:4d} {s + 1:4d}")
    for p in range(n):
        for q in range(p + 1):
            if abs(m.h1[p, q]) > tol:
                out.append(f"{m.h1[p, q]:.16E} {p + 1:4d} {q + 1:4d}    0    0")
    out.append(f"{m.e_core:.16E}    0    0    0    0")
    return "\n".join(out) + "\n"


def bundled_fcidump(name: str) -> MolecularIntegrals:
    """Load one of the integral files shipped in ``vqsls/data`` by stem."""
    ref = resources.files("vqsls.data").joinpath(f"{name}.fcidump")
    return parse_fcidump(ref.read_text(encoding="utf-8"))


def bundled_fcidump_names() -> list[str]:
    return sorted(p.name[:-8] for p in resources.files("vqsls.data").iterdir()
                  if p.name.endswith(".fcidump"))


def fock_diagonal(m: MolecularIntegrals) -> np.ndarray:
    occ = np.arange(m.n_occ)
    eri = m.eri
    coulomb = np.einsum("ppii->p", eri[:, :, occ][:, :, :, occ])
    exchange = np.einsum("piip->p", eri[:, occ][:, :, occ])
    return np.diag(m.h1) + 2.0 * coulomb - exchange


def rhf_energy(m: MolecularIntegrals) -> float:
    occ = range(m.n_occ)
    e = m.e_core + 2.0 * sum(m.h1[i, i] for i in occ)
    e += sum(2.0 * m.eri[i, i, j, j] - m.eri[i, j, j, i] for i in occ for j in occ)
    return float(e)


@dataclass(frozen=True)
class Mp2Guess:
    t2: dict[tuple[int, int, int, int], float]
    fock_diag: np.ndarray
    n_occ: int
    skipped: tuple[tuple[int, int, int, int], ...] = field(default=())
    t1_zero: bool = True

    def correlation_energy(self, m: MolecularIntegrals) -> float:
        e = 0.0
        for (i, j, a, b), t in self.t2.items():
            e += t * (2.0 * m.eri[i, a, j, b] - m.eri[i, b, j, a])
        return float(e)


def mp2_amplitudes(m: MolecularIntegrals) -> Mp2Guess:
    """Closed-shell MP2 doubles ``t2[i,j,a,b] = (ia|jb) / (e_i + e_j - e_a - e_b)``.

    Spatial indices; ``i, j`` occupied and ``a, b`` virtual. Quadruples whose
    denominator falls below the degeneracy threshold are skipped and listed in
    ``skipped``.
    """
    eps = fock_diagonal(m)
    n_occ = m.n_occ
    occ = range(n_occ)
    vir = range(n_occ, m.n_orb)
    t2 = {}
    skipped = []
    for i, j, a, b in product(occ, occ, vir, vir):
        denom = eps[i] + eps[j] - eps[a] - eps[b]
        if abs(denom) < MP2_DEGENERACY_THRESHOLD:
            skipped.append((i, j, a, b))
            continue
        t2[(i, j, a, b)] = float(m.eri[i, a, j, b] / denom)
    if skipped:
        log.warning("MP2: skipped %d degenerate denominators", len(skipped))
    return Mp2Guess(t2, eps, n_occ, tuple(skipped))
