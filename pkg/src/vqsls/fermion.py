"""Jordan-Wigner mapping of molecular Hamiltonians onto Pauli strings.

Spin orbital ``p`` (alpha block ``0..n_orb-1`` then beta block) lives on
qubit ``p``; a set qubit means an occupied orbital.
"""
from __future__ import annotations

from collections import defaultdict

import numpy as np

from .chem_io import MolecularIntegrals
from .pauli import PauliHamiltonian, PauliString, PauliTerm

# operators are dicts {(x_mask, z_mask): coeff} meaning sum coeff * X^x Z^z


def _mul(a: dict, b: dict) -> dict:
    out: dict = defaultdict(complex)
    for (x1, z1), c1 in a.items():
        for (x2, z2), c2 in b.items():
            sign = -1 if bin(z1 & x2).count("1") & 1 else 1
            out[(x1 ^ x2, z1 ^ z2)] += sign * c1 * c2
    return out


def _ladder(p: int, n_qubits: int, dagger: bool) -> dict:
    bit = 1 << (n_qubits - 1 - p)
    zlow = 0
    for q in range(p):
        zlow |= 1 << (n_qubits - 1 - q)
    # a = Z_<p (X - XZ)/2, a^dag = Z_<p (X + XZ)/2
    return {(bit, zlow): 0.5, (bit, zlow | bit): 0.5 if dagger else -0.5}


def _to_hamiltonian(op: dict, n_qubits: int, atol: float) -> PauliHamiltonian:
    terms = []
    for (x, z), c in op.items():
        # X^x Z^z = (-i)^{|x&z|} * P(x, z) with Y = iXZ
        c = c * (-1j) ** bin(x & z).count("1")
        if abs(c) <= atol:
            continue
        if abs(c.imag) > 1e-10:
            raise ValueError(f"non-Hermitian residue {c} on {x:b}/{z:b}")
        axes = []
        for q in range(n_qubits):
            bit = 1 << (n_qubits - 1 - q)
            axes.append("IXZY"[(1 if x & bit else 0) + (2 if z & bit else 0)])
        terms.append(PauliTerm(float(c.real), PauliString("".join(axes))))
    terms.sort(key=lambda t: t.string.axes)
    return PauliHamiltonian(terms, n_qubits)


def molecular_qubit_hamiltonian(m: MolecularIntegrals, atol: float = 1e-12) -> PauliHamiltonian:
    n = m.n_orb
    nq = 2 * n
    cre = [_ladder(p, nq, True) for p in range(nq)]
    ann = [_ladder(p, nq, False) for p in range(nq)]
    excit = {}

    def e_op(p, q):
        if (p, q) not in excit:
            excit[(p, q)] = _mul(cre[p], ann[q])
        return excit[(p, q)]

    total: dict = defaultdict(complex)
    total[(0, 0)] += m.e_core
    for sigma in (0, n):
        for p in range(n):
            for q in range(n):
                if m.h1[p, q] != 0.0:
                    for k, v in e_op(p + sigma, q + sigma).items():
                        total[k] += m.h1[p, q] * v
    # 1/2 sum (pq|rs) a+_p a+_r a_s a_q = 1/2 sum (pq|rs) (E_pq E_rs - delta_qr E_ps)
    for s1 in (0, n):
        for s2 in (0, n):
            for p, q, r, s in zip(*np.nonzero(m.eri)):
                v = 0.5 * m.eri[p, q, r, s]
                P, Q, R, S = p + s1, q + s1, r + s2, s + s2
                for k, c in _mul(e_op(P, Q), e_op(R, S)).items():
                    total[k] += v * c
                if Q == R:
                    for k, c in e_op(P, S).items():
                        total[k] -= v * c
    return _to_hamiltonian(total, nq, atol)
