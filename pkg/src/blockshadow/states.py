"""Dense statevector simulation for preparing and probing test states (n <= 14).

Basis indices put qubit 0 in the most significant bit, matching the Pauli mask
convention, so popcount tricks work unchanged on either kind of word.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .clifford import LayeredBlockUnitary
from .pauli import BlockLayout, ObservableSum, PauliString

_MAX_QUBITS = 14


@dataclass(frozen=True, eq=False)
class StateVector:
    n: int
    amps: np.ndarray

    def __post_init__(self):
        if self.n > _MAX_QUBITS:
            raise ValueError(f"dense simulation capped at n={_MAX_QUBITS}")
        if self.amps.shape != (2**self.n,):
            raise ValueError("amplitude count does not match qubit count")
        norm = np.linalg.norm(self.amps)
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"state not normalized: |psi| = {norm}")

    def to_json(self) -> dict:
        return {"n": self.n, "amplitudes": [[float(a.real), float(a.imag)] for a in self.amps]}

    @classmethod
    def from_json(cls, data) -> "StateVector":
        amps = np.array([complex(re, im) for re, im in data["amplitudes"]])
        return cls(data["n"], amps)


def zero_state(n: int) -> StateVector:
    amps = np.zeros(2**n, dtype=complex)
    amps[0] = 1.0
    return StateVector(n, amps)


def ghz_state(n: int) -> StateVector:
    amps = np.zeros(2**n, dtype=complex)
    amps[0] = amps[-1] = 1 / np.sqrt(2)
    return StateVector(n, amps)


def bell_pairs_state(n: int) -> StateVector:
    """Tensor product of Bell pairs on (0,1), (2,3), ..."""
    if n % 2:
        raise ValueError("need even n for Bell pairs")
    pair = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
    amps = np.array([1.0 + 0j])
    for _ in range(n // 2):
        amps = np.kron(amps, pair)
    return StateVector(n, amps)


def _apply_block_matrix(amps: np.ndarray, mat: np.ndarray, n: int, k: int, block: int):
    """Apply a 2^k x 2^k matrix to contiguous qubits [block*k, (block+1)*k)."""
    left = 1 << (block * k)
    mid = 1 << k
    right = 1 << (n - (block + 1) * k)
    cube = amps.reshape(left, mid, right)
    return np.einsum("ab,ibj->iaj", mat, cube).reshape(-1)


def apply_block_unitary(psi: StateVector, u: LayeredBlockUnitary) -> StateVector:
    if u.layout.n != psi.n:
        raise ValueError("layout does not match state")
    amps = psi.amps
    k = u.layout.k
    for i, blk in enumerate(u.blocks):
        amps = _apply_block_matrix(amps, blk.dense(), psi.n, k, i)
    return StateVector(psi.n, amps)


def apply_pauli(psi: StateVector, p: PauliString) -> StateVector:
    """Exact Pauli application via index permutation and phases."""
    if p.n != psi.n:
        raise ValueError("dimension mismatch")
    idx = np.arange(2**psi.n)
    src = idx ^ p.x
    # sigma(x,z) = i^{nY} X^x Z^z: Z acts on the source index, X relabels.
    phases = (1j**p.phase) * (1j**p.n_y) * np.where(_parity_lut(psi.n)[src & p.z], -1.0, 1.0)
    amps = phases * psi.amps[src]
    return StateVector(psi.n, amps)


_parity_cache: dict[int, np.ndarray] = {}


def _parity_lut(n: int) -> np.ndarray:
    lut = _parity_cache.get(n)
    if lut is None:
        idx = np.arange(2**n, dtype=np.int64)
        lut = np.zeros(2**n, dtype=np.int64)
        while idx.any():
            lut ^= idx & 1
            idx >>= 1
        _parity_cache[n] = lut
    return lut


def expectation_pauli(psi: StateVector, p: PauliString) -> float:
    """<psi| p |psi>, exact; imaginary part must vanish for Hermitian p."""
    val = np.vdot(psi.amps, apply_pauli(psi, p).amps)
    if abs(val.imag) > 1e-10:
        raise ValueError("non-real expectation for Hermitian input")
    return float(val.real)


def expectation(psi: StateVector, obs: ObservableSum) -> float:
    if obs.n != psi.n:
        raise ValueError("dimension mismatch")
    return float(sum(c * expectation_pauli(psi, p) for c, p in obs.terms))


def all_pauli_expectations(psi: StateVector) -> np.ndarray:
    """Table of <psi| sigma(x,z) |psi> for all 4^n strings, indexed (x << n)|z.

    One Walsh-Hadamard transform per x-mask: O(n 4^n) total.
    """
    n = psi.n
    dim = 2**n
    table = np.empty(4**n, dtype=float)
    amps = psi.amps
    idx = np.arange(dim)
    i_pow = np.array([1, 1j, -1, -1j])
    for x in range(dim):
        c = amps * np.conj(amps[idx ^ x])
        t = _walsh_hadamard(c)
        vals = i_pow[_bitcount(x & idx) % 4] * t
        table[x * dim + idx] = vals.real
    return table


def _walsh_hadamard(v: np.ndarray) -> np.ndarray:
    v = v.copy()
    h = 1
    while h < len(v):
        v = v.reshape(-1, 2 * h)
        a = v[:, :h].copy()
        b = v[:, h:].copy()
        v[:, :h] = a + b
        v[:, h:] = a - b
        v = v.reshape(-1)
        h *= 2
    return v


def _bitcount(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.int64)
    out = np.zeros_like(v)
    while v.any():
        out += v & 1
        v = v >> 1
    return out


def sample_bitstrings(psi: StateVector, count: int, rng) -> np.ndarray:
    """i.i.d. Born-rule samples as integer basis indices (qubit 0 = MSB)."""
    probs = np.abs(psi.amps) ** 2
    probs = probs / probs.sum()
    return rng.choice(len(probs), size=count, p=probs)


def observable_matrix(obs: ObservableSum, sparse: bool = False):
    if sparse:
        dim = 2**obs.n
        acc = scipy.sparse.csr_matrix((dim, dim), dtype=complex)
        idx = np.arange(dim)
        lut = _parity_lut(obs.n)
        for c, p in obs.terms:
            cols = idx ^ p.x
            vals = c * (1j ** p.n_y) * np.where(lut[cols & p.z], -1.0, 1.0)
            acc += scipy.sparse.csr_matrix((vals, (idx, cols)), shape=(dim, dim))
        return acc
    return obs.to_matrix()


def ground_state_exact(h: ObservableSum, n_max: int = 12) -> tuple[float, StateVector]:
    """Lowest eigenpair by exact diagonalization (sparse beyond 10 qubits)."""
    n = h.n
    if n > n_max:
        raise ValueError("system too large for exact diagonalization")
    if n <= 10:
        mat = observable_matrix(h)
        evals, evecs = np.linalg.eigh(mat)
        energy, vec = evals[0], evecs[:, 0]
    else:
        mat = observable_matrix(h, sparse=True)
        evals, evecs = scipy.sparse.linalg.eigsh(mat, k=1, which="SA", tol=1e-12)
        energy, vec = evals[0], evecs[:, 0]
    vec = vec / np.linalg.norm(vec)
    return float(energy), StateVector(n, vec.astype(complex))


def ssh_hopping_matrix(n: int, v: float, w: float) -> np.ndarray:
    h = np.zeros((n, n))
    for i in range(n - 1):
        h[i, i + 1] = h[i + 1, i] = v if i % 2 == 0 else w
    return h


def ssh_qubit_hamiltonian(n: int, v: float, w: float) -> ObservableSum:
    """Jordan-Wigner image of the dimerized hopping chain."""
    terms = []
    for i in range(n - 1):
        t = v if i % 2 == 0 else w
        for letter in "XY":
            x = z = 0
            for site in (i, i + 1):
                bit = n - 1 - site
                if letter == "X":
                    x |= 1 << bit
                else:
                    x |= 1 << bit
                    z |= 1 << bit
            terms.append((t / 2.0, PauliString(n, x, z, 0)))
    return ObservableSum(n, terms)


def ssh_ground_state(n: int, v: float, w: float) -> StateVector:
    """Half-filled free-fermion ground state of the hopping chain under JW.

    Occupies the n/2 lowest single-particle modes; amplitudes are Slater
    minors on the occupation basis.
    """
    if n % 2:
        raise ValueError("need even n for half filling")
    if n > _MAX_QUBITS:
        raise ValueError("system too large")
    h = ssh_hopping_matrix(n, v, w)
    evals, evecs = np.linalg.eigh(h)
    occupied = evecs[:, : n // 2]
    amps = np.zeros(2**n, dtype=complex)
    for sites in combinations(range(n), n // 2):
        idx = 0
        for s in sites:
            idx |= 1 << (n - 1 - s)
        amps[idx] = np.linalg.det(occupied[list(sites), :])
    amps /= np.linalg.norm(amps)
    return StateVector(n, amps)


def ssh_ground_energy(n: int, v: float, w: float) -> float:
    evals = np.linalg.eigvalsh(ssh_hopping_matrix(n, v, w))
    return float(np.sum(evals[: n // 2]))


def evolve_exact(psi: StateVector, h: ObservableSum, t: float) -> StateVector:
    """exp(-iHt)|psi> via eigendecomposition; n <= 10."""
    if psi.n > 10:
        raise ValueError("evolution capped at n=10")
    if h.n != psi.n:
        raise ValueError("dimension mismatch")
    evals, evecs = np.linalg.eigh(observable_matrix(h))
    amps = evecs @ (np.exp(-1j * evals * t) * (evecs.conj().T @ psi.amps))
    amps /= np.linalg.norm(amps)
    return StateVector(psi.n, amps)


def evolution_operator(h: ObservableSum, t: float) -> np.ndarray:
    evals, evecs = np.linalg.eigh(observable_matrix(h))
    return (evecs * np.exp(-1j * evals * t)) @ evecs.conj().T


def haar_two_qubit(rng) -> np.ndarray:
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    q, r = np.linalg.qr(g)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_circuit_state(n: int, depth: int, rng) -> StateVector:
    """Brickwork of nearest-neighbour two-qubit Haar gates on |0^n>."""
    if n > _MAX_QUBITS:
        raise ValueError("system too large")
    amps = np.zeros(2**n, dtype=complex)
    amps[0] = 1.0
    for layer in range(depth):
        start = layer % 2
        for q in range(start, n - 1, 2):
            gate = haar_two_qubit(rng)
            left = 1 << q
            right = 1 << (n - q - 2)
            cube = amps.reshape(left, 4, right)
            amps = np.einsum("ab,ibj->iaj", gate, cube).reshape(-1)
    amps /= np.linalg.norm(amps)
    return StateVector(n, amps)


def purity_exact(psi: StateVector, subsystem=None) -> float:
    """Tr(rho_A^2) of the reduced state on the given qubits (default: all)."""
    n = psi.n
    if subsystem is None:
        subsystem = range(n)
    sub = sorted(set(subsystem))
    if any(q < 0 or q >= n for q in sub):
        raise ValueError("subsystem qubit out of range")
    if len(sub) == n:
        return 1.0
    rest = [q for q in range(n) if q not in sub]
    perm = sub + rest
    tensor = psi.amps.reshape([2] * n).transpose(perm)
    mat = tensor.reshape(2 ** len(sub), 2 ** len(rest))
    s = np.linalg.svd(mat, compute_uv=False)
    return float(np.sum(s**4))
