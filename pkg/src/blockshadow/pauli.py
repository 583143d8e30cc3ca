"""Bit-packed Pauli strings, block layouts, and weighted Pauli-sum observables.

A Pauli string on n qubits is stored as two n-bit masks (x, z) plus a phase
exponent e, representing the operator i^e * (tensor of single-qubit factors),
where qubit j carries X if only the x bit is set, Z if only the z bit is set,
Y if both are set, and I otherwise.  Bit (n-1-j) of a mask belongs to qubit j,
so masks share the bit order of computational-basis state indices (qubit 0 is
the leftmost character of the text form and the most significant bit).
Hermitian strings have phase 0 (sign +1) or 2 (sign -1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

_PAULI_CHARS = "IZXY"  # index = 2*x_bit + z_bit
_CHAR_TO_XZ = {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}

_PAULI_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _popcount(v: int) -> int:
    return v.bit_count()


@dataclass(frozen=True)
class PauliString:
    """Signed n-qubit Pauli string, value i^phase * sigma(x, z)."""

    n: int
    x: int
    z: int
    phase: int = 0

    def __post_init__(self):
        mask = (1 << self.n) - 1
        if self.x & ~mask or self.z & ~mask:
            raise ValueError("mask has bits beyond n qubits")
        object.__setattr__(self, "phase", self.phase % 4)

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n, 0, 0, 0)

    @classmethod
    def from_text(cls, text: str) -> "PauliString":
        """Parse e.g. "XIZ", "-YY", "+Z".  Qubit 0 is the leftmost character."""
        s = text.strip()
        phase = 0
        if s.startswith("-"):
            phase = 2
            s = s[1:]
        elif s.startswith("+"):
            s = s[1:]
        if not s:
            raise ValueError("empty Pauli string")
        x = z = 0
        for ch in s:
            try:
                xb, zb = _CHAR_TO_XZ[ch]
            except KeyError:
                raise ValueError(f"invalid Pauli character {ch!r}") from None
            x = (x << 1) | xb
            z = (z << 1) | zb
        return cls(len(s), x, z, phase)

    def to_text(self) -> str:
        if self.phase not in (0, 2):
            raise ValueError("anti-Hermitian phase has no text form")
        chars = []
        for j in range(self.n):
            bit = self.n - 1 - j
            chars.append(_PAULI_CHARS[2 * ((self.x >> bit) & 1) + ((self.z >> bit) & 1)])
        return ("-" if self.phase == 2 else "") + "".join(chars)

    def qubit(self, j: int) -> str:
        """Letter of the factor on qubit j (ignoring the global sign)."""
        bit = self.n - 1 - j
        return _PAULI_CHARS[2 * ((self.x >> bit) & 1) + ((self.z >> bit) & 1)]

    @property
    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    @property
    def sign(self) -> int:
        """+1 or -1 for Hermitian strings."""
        if self.phase == 0:
            return 1
        if self.phase == 2:
            return -1
        raise ValueError("not a signed Hermitian string")

    @property
    def n_y(self) -> int:
        return _popcount(self.x & self.z)

    def weight(self) -> int:
        return _popcount(self.x | self.z)

    def with_phase(self, phase: int) -> "PauliString":
        return PauliString(self.n, self.x, self.z, phase)

    def restrict(self, hi_bit: int, lo_bit: int) -> "PauliString":
        """Sub-string on the bit range [lo_bit, hi_bit) of the masks."""
        width = hi_bit - lo_bit
        mask = (1 << width) - 1
        return PauliString(width, (self.x >> lo_bit) & mask, (self.z >> lo_bit) & mask, 0)

    def to_matrix(self) -> np.ndarray:
        """Dense 2^n x 2^n matrix; intended for small n only."""
        if self.n > 12:
            raise ValueError("dense form limited to n <= 12")
        m = np.array([[1.0 + 0j]])
        for j in range(self.n):
            m = np.kron(m, _PAULI_MATS[self.qubit(j)])
        return (1j ** self.phase) * m


def multiply(p: PauliString, q: PauliString) -> PauliString:
    """Operator product p*q with exact phase tracking."""
    if p.n != q.n:
        raise ValueError(f"qubit counts differ: {p.n} != {q.n}")
    x = p.x ^ q.x
    z = p.z ^ q.z
    ny_out = _popcount(x & z)
    phase = (p.phase + q.phase + p.n_y + q.n_y - ny_out + 2 * _popcount(p.z & q.x)) % 4
    return PauliString(p.n, x, z, phase)


def commutes(p: PauliString, q: PauliString) -> bool:
    """True iff the symplectic product <x_p, z_q> + <z_p, x_q> is even."""
    if p.n != q.n:
        raise ValueError(f"qubit counts differ: {p.n} != {q.n}")
    return (_popcount(p.x & q.z) + _popcount(p.z & q.x)) % 2 == 0


@dataclass(frozen=True)
class BlockLayout:
    """Partition of n qubits into contiguous blocks of k qubits each."""

    n: int
    k: int

    def __post_init__(self):
        if self.n < 1 or self.k < 1:
            raise ValueError("n and k must be positive")
        if self.n % self.k != 0:
            raise ValueError(f"block size {self.k} does not divide {self.n} qubits")

    @property
    def nblocks(self) -> int:
        return self.n // self.k

    def block_qubits(self, i: int) -> range:
        return range(i * self.k, (i + 1) * self.k)

    def block_bits(self, i: int) -> tuple[int, int]:
        """(hi, lo) bit positions of block i in mask / basis-index order."""
        hi = self.n - i * self.k
        return hi, hi - self.k

    def block_substring(self, value: int, i: int) -> int:
        """Extract block i's k bits from a mask or basis index."""
        hi, lo = self.block_bits(i)
        return (value >> lo) & ((1 << self.k) - 1)

    def block_pauli(self, p: PauliString, i: int) -> PauliString:
        hi, lo = self.block_bits(i)
        return p.restrict(hi, lo)


def block_weight(p: PauliString, layout: BlockLayout) -> int:
    """Number of blocks on which p acts non-trivially."""
    if layout.n != p.n:
        raise ValueError("layout size does not match Pauli string")
    w = 0
    occ = p.x | p.z
    for i in range(layout.nblocks):
        if layout.block_substring(occ, i):
            w += 1
    return w


class ObservableSum:
    """Canonical real-weighted sum of Hermitian Pauli strings.

    Terms are kept sorted by (x, z) with duplicate strings merged and zero
    coefficients dropped; every stored string has phase 0 (signs live in the
    coefficients).
    """

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms):
        merged: dict[tuple[int, int], complex] = {}
        for coeff, p in terms:
            if p.n != n:
                raise ValueError("term size does not match observable")
            c = complex(coeff) * (1j ** p.phase)
            key = (p.x, p.z)
            merged[key] = merged.get(key, 0.0) + c
        clean = []
        for (x, z), c in merged.items():
            if abs(c.imag) > 1e-12:
                raise ValueError(f"non-Hermitian residue {c.imag:g} in observable term")
            if abs(c.real) > 1e-14:
                clean.append((c.real, PauliString(n, x, z, 0)))
        clean.sort(key=lambda t: (t[1].x, t[1].z))
        self.n = n
        self.terms = tuple(clean)

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __eq__(self, other):
        if not isinstance(other, ObservableSum):
            return NotImplemented
        if self.n != other.n or len(self) != len(other):
            return False
        return all(
            a[1] == b[1] and abs(a[0] - b[0]) < 1e-12 for a, b in zip(self.terms, other.terms)
        )

    def __add__(self, other: "ObservableSum") -> "ObservableSum":
        if self.n != other.n:
            raise ValueError("qubit counts differ")
        return ObservableSum(self.n, list(self.terms) + list(other.terms))

    def scaled(self, factor: float) -> "ObservableSum":
        return ObservableSum(self.n, [(factor * c, p) for c, p in self.terms])

    def coefficient(self, p: PauliString) -> float:
        for c, q in self.terms:
            if q.x == p.x and q.z == p.z:
                return c
        return 0.0

    def paulis(self) -> list[PauliString]:
        return [p for _, p in self.terms]

    def to_matrix(self) -> np.ndarray:
        m = np.zeros((2**self.n, 2**self.n), dtype=complex)
        for c, p in self.terms:
            m += c * p.to_matrix()
        return m

    def to_json(self) -> list[dict]:
        return [{"coeff": c, "pauli": p.to_text()} for c, p in self.terms]

    @classmethod
    def from_json(cls, data) -> "ObservableSum":
        if isinstance(data, str):
            data = json.loads(data)
        if not data:
            raise ValueError("empty observable")
        paulis = [PauliString.from_text(entry["pauli"]) for entry in data]
        n = paulis[0].n
        return cls(n, [(entry["coeff"], p) for entry, p in zip(data, paulis)])


def _chain_term(n: int, start: int, letters: str) -> PauliString:
    x = z = 0
    for offset, ch in enumerate(letters):
        xb, zb = _CHAR_TO_XZ[ch]
        bit = n - 1 - (start + offset)
        x |= xb << bit
        z |= zb << bit
    return PauliString(n, x, z, 0)


def build_cluster_heisenberg(n: int, lam: float = 1.0) -> ObservableSum:
    """Cluster-Heisenberg chain: sum_i Z_i X_{i+1} Z_{i+2} plus lam times the
    nearest-neighbour Heisenberg couplings, open boundaries."""
    if n < 2:
        raise ValueError("need at least 2 qubits")
    terms = []
    for i in range(n - 2):
        terms.append((1.0, _chain_term(n, i, "ZXZ")))
    for i in range(n - 1):
        for pair in ("XX", "YY", "ZZ"):
            terms.append((lam, _chain_term(n, i, pair)))
    return ObservableSum(n, terms)


def cluster_heisenberg_parts(n: int, lam: float = 1.0) -> list[ObservableSum]:
    """The four sub-sums (ZXZ, XX, YY, ZZ) whose union is the full chain."""
    if n < 2:
        raise ValueError("need at least 2 qubits")
    parts = [ObservableSum(n, [(1.0, _chain_term(n, i, "ZXZ")) for i in range(n - 2)])] if n > 2 else []
    for pair in ("XX", "YY", "ZZ"):
        parts.append(ObservableSum(n, [(lam, _chain_term(n, i, pair)) for i in range(n - 1)]))
    return [p for p in parts if len(p)]


def _product_sum(a: ObservableSum, b: ObservableSum) -> list[tuple[complex, PauliString]]:
    out = []
    for ca, pa in a.terms:
        for cb, pb in b.terms:
            prod = multiply(pa, pb)
            out.append((ca * cb * 1j**prod.phase, prod.with_phase(0)))
    return out


def square_observable(h: ObservableSum) -> ObservableSum:
    """Canonical Pauli expansion of H^2; anti-Hermitian phases cancel pairwise."""
    return ObservableSum(h.n, _product_sum(h, h))


def cross_terms(parts) -> ObservableSum:
    """sum_{a<b} (H_a H_b + H_b H_a) for a partition of H into sub-sums."""
    parts = list(parts)
    if not parts:
        raise ValueError("no parts given")
    n = parts[0].n
    acc: list[tuple[complex, PauliString]] = []
    for a in range(len(parts)):
        for b in range(a + 1, len(parts)):
            acc.extend(_product_sum(parts[a], parts[b]))
            acc.extend(_product_sum(parts[b], parts[a]))
    return ObservableSum(n, acc)
