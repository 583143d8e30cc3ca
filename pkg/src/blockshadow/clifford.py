"""Symplectic-tableau Clifford arithmetic for k-qubit measurement blocks.

A tableau stores the conjugation images U X_j U^dag and U Z_j U^dag as signed
Pauli strings.  Symplectic vectors are packed as 2k-bit integers v = (x << k)|z
so GF(2) linear algebra runs on machine words.  Enumeration is exact for
k <= 2, which is what every brute-force channel oracle in the test suite uses.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .pauli import BlockLayout, PauliString, multiply

# ---------------------------------------------------------------------------
# symplectic helpers on packed vectors


def _vec(p: PauliString) -> int:
    return (p.x << p.n) | p.z


def _vec_to_masks(v: int, k: int) -> tuple[int, int]:
    return v >> k, v & ((1 << k) - 1)


def _dual(v: int, k: int) -> int:
    """Swap halves so that sp(a, b) = parity(a & dual(b))."""
    x, z = _vec_to_masks(v, k)
    return (z << k) | x


def _parity(v: int) -> int:
    return v.bit_count() & 1


def _sp(a: int, b: int, k: int) -> int:
    return _parity(a & _dual(b, k))


def _gf2_affine_solutions(constraints, dim):
    """Solve parity(c & x) = t for all (c, t); return (particular, null basis).

    Returns None when inconsistent.  Rows carry the rhs in bit 0.
    """
    pivots: list[tuple[int, int]] = []
    for c, t in constraints:
        cur = (c << 1) | (t & 1)
        for pb, prow in pivots:
            if (cur >> 1) >> pb & 1:
                cur ^= prow
        vec = cur >> 1
        if vec == 0:
            if cur & 1:
                return None
            continue
        pb = vec.bit_length() - 1
        pivots = [(qb, qrow ^ cur if (qrow >> 1) >> pb & 1 else qrow) for qb, qrow in pivots]
        pivots.append((pb, cur))
    pivot_bits = {pb for pb, _ in pivots}
    x = 0
    for pb, prow in pivots:
        if prow & 1:
            x |= 1 << pb
    basis = []
    for f in range(dim):
        if f in pivot_bits:
            continue
        v = 1 << f
        for pb, prow in pivots:
            if (prow >> 1) >> f & 1:
                v |= 1 << pb
        basis.append(v)
    return x, basis


def _affine_sample(particular: int, basis: list[int], rng) -> int:
    v = particular
    for b in basis:
        if rng.integers(0, 2):
            v ^= b
    return v


# ---------------------------------------------------------------------------
# tableau


class CliffordTableau:
    """Clifford element of Cl(k) given by generator images under conjugation."""

    __slots__ = ("k", "x_imgs", "z_imgs", "_key", "_table", "_dense", "__weakref__")

    def __init__(self, k: int, x_imgs, z_imgs, validate: bool = True):
        self.k = k
        self.x_imgs = tuple(x_imgs)
        self.z_imgs = tuple(z_imgs)
        self._key = tuple((p.x, p.z, p.phase) for p in self.x_imgs + self.z_imgs)
        self._table = None
        self._dense = None
        if validate and not self.is_valid():
            raise ValueError("images do not define a Clifford element")

    @classmethod
    def identity(cls, k: int) -> "CliffordTableau":
        xs = [PauliString(k, 1 << (k - 1 - j), 0, 0) for j in range(k)]
        zs = [PauliString(k, 0, 1 << (k - 1 - j), 0) for j in range(k)]
        return cls(k, xs, zs, validate=False)

    def is_valid(self) -> bool:
        rows = self.x_imgs + self.z_imgs
        if any(p.n != self.k or p.phase not in (0, 2) or p.is_identity for p in rows):
            return False
        k = self.k
        for i in range(k):
            for j in range(k):
                a = _sp(_vec(self.x_imgs[i]), _vec(self.z_imgs[j]), k)
                if a != (1 if i == j else 0):
                    return False
                if _sp(_vec(self.x_imgs[i]), _vec(self.x_imgs[j]), k):
                    return False
                if _sp(_vec(self.z_imgs[i]), _vec(self.z_imgs[j]), k):
                    return False
        return True

    def __eq__(self, other):
        return isinstance(other, CliffordTableau) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    # -- conjugation --------------------------------------------------------

    def _conj_mask(self, x: int, z: int) -> PauliString:
        """Image of the unsigned string sigma(x, z)."""
        k = self.k
        acc = PauliString.identity(k)
        for j in range(k):
            if (x >> (k - 1 - j)) & 1:
                acc = multiply(acc, self.x_imgs[j])
        for j in range(k):
            if (z >> (k - 1 - j)) & 1:
                acc = multiply(acc, self.z_imgs[j])
        ny_in = (x & z).bit_count()
        return acc.with_phase(acc.phase + ny_in)

    def table(self):
        """(mask, phase) image arrays indexed by (x << k) | z of the input."""
        if self._table is None:
            size = 1 << (2 * self.k)
            masks = np.empty(size, dtype=np.int64)
            phases = np.empty(size, dtype=np.int64)
            for x in range(1 << self.k):
                for z in range(1 << self.k):
                    q = self._conj_mask(x, z)
                    idx = (x << self.k) | z
                    masks[idx] = (q.x << self.k) | q.z
                    phases[idx] = q.phase
            self._table = (masks, phases)
        return self._table

    def conjugate(self, p: PauliString) -> PauliString:
        """U p U^dag with exact sign."""
        if p.n != self.k:
            raise ValueError("dimension mismatch")
        masks, phases = self.table()
        idx = (p.x << self.k) | p.z
        x, z = _vec_to_masks(int(masks[idx]), self.k)
        return PauliString(self.k, x, z, (p.phase + int(phases[idx])) % 4)

    def compose(self, other: "CliffordTableau") -> "CliffordTableau":
        """Tableau of self followed after other, i.e. the product U_self U_other."""
        xs = [self.conjugate(p) for p in other.x_imgs]
        zs = [self.conjugate(p) for p in other.z_imgs]
        return CliffordTableau(self.k, xs, zs, validate=False)

    def inverse(self) -> "CliffordTableau":
        k = self.k
        masks, phases = self.table()
        want_x = [((1 << (k - 1 - j)) << k) for j in range(k)]
        want_z = [(1 << (k - 1 - j)) for j in range(k)]
        inv_x = [None] * k
        inv_z = [None] * k
        for idx in range(1 << (2 * k)):
            out = int(masks[idx])
            ph = int(phases[idx])
            for j in range(k):
                if out == want_x[j]:
                    x, z = _vec_to_masks(idx, k)
                    inv_x[j] = PauliString(k, x, z, ph)
                if out == want_z[j]:
                    x, z = _vec_to_masks(idx, k)
                    inv_z[j] = PauliString(k, x, z, ph)
        return CliffordTableau(k, inv_x, inv_z, validate=False)

    # -- dense form ----------------------------------------------------------

    def to_unitary(self) -> np.ndarray:
        """Dense 2^k x 2^k unitary realizing the tableau (global phase fixed)."""
        if self._dense is not None:
            return self._dense
        k = self.k
        dim = 1 << k
        proj = np.eye(dim, dtype=complex)
        for p in self.z_imgs:
            proj = proj @ (np.eye(dim) + p.to_matrix()) / 2.0
        phi0 = None
        for col in range(dim):
            cand = proj[:, col]
            norm = np.linalg.norm(cand)
            if norm > 1e-6:
                phi0 = cand / norm
                break
        lead = np.flatnonzero(np.abs(phi0) > 1e-9)[0]
        phi0 = phi0 * (abs(phi0[lead]) / phi0[lead])
        x_mats = [p.to_matrix() for p in self.x_imgs]
        u = np.empty((dim, dim), dtype=complex)
        for b in range(dim):
            col = phi0
            for j in range(k):
                if (b >> (k - 1 - j)) & 1:
                    col = x_mats[j] @ col
            u[:, b] = col
        self._dense = u
        return u

    # -- serialization -------------------------------------------------------

    def to_json(self) -> dict:
        def rows(imgs):
            return [[format(p.x, "x"), format(p.z, "x"), 0 if p.phase == 0 else 1] for p in imgs]

        return {"k": self.k, "x_rows": rows(self.x_imgs), "z_rows": rows(self.z_imgs)}

    @classmethod
    def from_json(cls, data) -> "CliffordTableau":
        k = data["k"]

        def parse(rows):
            return [PauliString(k, int(x, 16), int(z, 16), 2 * s) for x, z, s in rows]

        return cls(k, parse(data["x_rows"]), parse(data["z_rows"]))


# ---------------------------------------------------------------------------
# sampling and enumeration


def clifford_group_order(k: int) -> int:
    """|Cl(k)| modulo global phases: 2^(k^2+2k) * prod_j (4^j - 1)."""
    order = 1 << (k * k + 2 * k)
    for j in range(1, k + 1):
        order *= 4**j - 1
    return order


def sample_clifford(k: int, rng) -> CliffordTableau:
    """Uniform element of Cl(k): random symplectic map row by row, then signs."""
    if k < 1:
        raise ValueError("k must be positive")
    dim = 2 * k
    chosen: list[int] = []
    pairs: list[tuple[int, int]] = []
    for _ in range(k):
        cons = [(_dual(w, k), 0) for w in chosen]
        part, basis = _gf2_affine_solutions(cons, dim)
        a = 0
        while a == 0:
            a = _affine_sample(part, basis, rng)
        cons_b = cons + [(_dual(a, k), 1)]
        part_b, basis_b = _gf2_affine_solutions(cons_b, dim)
        b = _affine_sample(part_b, basis_b, rng)
        chosen.extend([a, b])
        pairs.append((a, b))
    xs, zs = [], []
    for a, b in pairs:
        ax, az = _vec_to_masks(a, k)
        bx, bz = _vec_to_masks(b, k)
        xs.append(PauliString(k, ax, az, 2 * int(rng.integers(0, 2))))
        zs.append(PauliString(k, bx, bz, 2 * int(rng.integers(0, 2))))
    return CliffordTableau(k, xs, zs, validate=False)


@functools.lru_cache(maxsize=None)
def enumerate_clifford(k: int) -> tuple[CliffordTableau, ...]:
    """All elements of Cl(k); supported for k <= 2 only."""
    if k > 2:
        raise ValueError("enumeration supported for k <= 2 only")
    dim = 2 * k
    vecs = list(range(1, 1 << dim))

    symplectics: list[list[int]] = []

    def extend(pairs: list[int]):
        if len(pairs) == 2 * k:
            symplectics.append(list(pairs))
            return
        cons = [(_dual(w, k), 0) for w in pairs]
        for a in vecs:
            if any(_parity(a & c) != t for c, t in cons):
                continue
            cons_b = cons + [(_dual(a, k), 1)]
            for b in vecs:
                if any(_parity(b & c) != t for c, t in cons_b):
                    continue
                extend(pairs + [a, b])

    extend([])

    out = []
    for sym in symplectics:
        pair_masks = [_vec_to_masks(v, k) for v in sym]
        for signs in range(1 << dim):
            xs, zs = [], []
            for j in range(k):
                ax, az = pair_masks[2 * j]
                bx, bz = pair_masks[2 * j + 1]
                xs.append(PauliString(k, ax, az, 2 * ((signs >> (2 * j)) & 1)))
                zs.append(PauliString(k, bx, bz, 2 * ((signs >> (2 * j + 1)) & 1)))
            out.append(CliffordTableau(k, xs, zs, validate=False))
    return tuple(out)


def sample_clifford_fast(k: int, rng) -> CliffordTableau:
    """Uniform Cl(k) sample; index draw from the enumerated group when k <= 2.

    Identical law to sample_clifford, but returns shared instances whose
    conjugation tables amortize across records.
    """
    if k <= 2:
        group = enumerate_clifford(k)
        return group[int(rng.integers(0, len(group)))]
    return sample_clifford(k, rng)


# ---------------------------------------------------------------------------
# indicator machinery


def is_z_type(p: PauliString) -> bool:
    return p.x == 0


def indicator_block(u: CliffordTableau, p: PauliString) -> int:
    """1 iff u p u^dag lies in +-{I,Z}^k."""
    masks, _ = u.table()
    out = int(masks[(p.x << u.k) | p.z])
    return 1 if (out >> u.k) == 0 else 0


@dataclass(frozen=True, eq=False)
class BlockUnitary:
    """One measurement block: either a Clifford tableau or a dense unitary."""

    k: int
    tableau: CliffordTableau | None = None
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if (self.tableau is None) == (self.matrix is None):
            raise ValueError("exactly one of tableau / matrix must be given")
        if self.matrix is not None:
            dim = 1 << self.k
            if self.matrix.shape != (dim, dim):
                raise ValueError("matrix dimension does not match k")
            if np.max(np.abs(self.matrix.conj().T @ self.matrix - np.eye(dim))) > 1e-10:
                raise ValueError("matrix is not unitary")

    @property
    def is_tableau(self) -> bool:
        return self.tableau is not None

    def dense(self) -> np.ndarray:
        return self.tableau.to_unitary() if self.is_tableau else self.matrix

    def to_json(self) -> dict:
        if self.is_tableau:
            return {"kind": "tableau", **self.tableau.to_json()}
        flat = [[float(v.real), float(v.imag)] for v in self.matrix.ravel()]
        return {"kind": "dense", "k": self.k, "u": flat}

    @classmethod
    def from_json(cls, data) -> "BlockUnitary":
        if data["kind"] == "tableau":
            return cls(data["k"], tableau=CliffordTableau.from_json(data))
        dim = 1 << data["k"]
        flat = np.array([complex(re, im) for re, im in data["u"]])
        return cls(data["k"], matrix=flat.reshape(dim, dim))


class LayeredBlockUnitary:
    """Measurement unitary acting as an independent block on each k-qubit block."""

    __slots__ = ("layout", "blocks")

    def __init__(self, layout: BlockLayout, blocks):
        blocks = tuple(blocks)
        if len(blocks) != layout.nblocks:
            raise ValueError("block count does not match layout")
        if any(b.k != layout.k for b in blocks):
            raise ValueError("block size mismatch")
        self.layout = layout
        self.blocks = blocks

    @classmethod
    def identity(cls, layout: BlockLayout) -> "LayeredBlockUnitary":
        ident = BlockUnitary(layout.k, tableau=CliffordTableau.identity(layout.k))
        return cls(layout, [ident] * layout.nblocks)

    @property
    def all_tableau(self) -> bool:
        return all(b.is_tableau for b in self.blocks)

    def conjugate(self, p: PauliString) -> PauliString:
        """U p U^dag, blockwise; Clifford blocks only."""
        if p.n != self.layout.n:
            raise ValueError("dimension mismatch")
        k = self.layout.k
        x = z = 0
        phase = p.phase
        for i, blk in enumerate(self.blocks):
            if not blk.is_tableau:
                raise ValueError("conjugation requires tableau blocks")
            sub = self.layout.block_pauli(p, i)
            out = blk.tableau.conjugate(sub)
            _, lo = self.layout.block_bits(i)
            x |= out.x << lo
            z |= out.z << lo
            phase += out.phase
        return PauliString(p.n, x, z, phase % 4)

    def same_as(self, other: "LayeredBlockUnitary") -> bool:
        if self.layout != other.layout:
            return False
        for a, b in zip(self.blocks, other.blocks):
            if a.is_tableau != b.is_tableau:
                return False
            if a.is_tableau:
                if a.tableau != b.tableau:
                    return False
            elif not np.allclose(a.matrix, b.matrix, atol=1e-12):
                return False
        return True

    def to_json(self) -> dict:
        return {
            "layout": {"n": self.layout.n, "k": self.layout.k},
            "blocks": [b.to_json() for b in self.blocks],
        }

    @classmethod
    def from_json(cls, data) -> "LayeredBlockUnitary":
        layout = BlockLayout(data["layout"]["n"], data["layout"]["k"])
        return cls(layout, [BlockUnitary.from_json(b) for b in data["blocks"]])


def indicator(u: LayeredBlockUnitary, p: PauliString) -> int:
    """1 iff U p U^dag lies in +-{I,Z}^n."""
    if p.n != u.layout.n:
        raise ValueError("dimension mismatch")
    k = u.layout.k
    for i, blk in enumerate(u.blocks):
        if not blk.is_tableau:
            raise ValueError("indicator requires tableau blocks")
        sub = u.layout.block_pauli(p, i)
        if not indicator_block(blk.tableau, sub):
            return 0
    return 1


def snapshot_weight(u: LayeredBlockUnitary, p: PauliString, b: int) -> int:
    """Tr(U p U^dag |b><b|) in {-1, 0, +1} for Clifford blocks."""
    if p.n != u.layout.n:
        raise ValueError("dimension mismatch")
    sign = p.sign
    for i, blk in enumerate(u.blocks):
        if not blk.is_tableau:
            raise ValueError("snapshot weight requires tableau blocks")
        sub = u.layout.block_pauli(p, i)
        q = blk.tableau.conjugate(sub)
        if q.x:
            return 0
        bsub = u.layout.block_substring(b, i)
        par = (q.z & bsub).bit_count() & 1
        sign *= q.sign * (1 - 2 * par)
    return sign


# ---------------------------------------------------------------------------
# special ensembles


def _pairwise_commuting_subgroups(k: int):
    """All maximal isotropic subgroups of the k-qubit Pauli quotient, as
    frozensets of nonzero packed vectors."""
    dim = 2 * k
    vecs = range(1, 1 << dim)
    groups = set()
    if k == 1:
        return [frozenset([v]) for v in vecs]

    def span(gens):
        out = {0}
        for g in gens:
            out |= {s ^ g for s in out}
        out.discard(0)
        return frozenset(out)

    def search(gens, members):
        if len(members) == (1 << k) - 1:
            groups.add(members)
            return
        start = gens[-1] if gens else 0
        for v in vecs:
            if v <= start or v in members:
                continue
            if all(_sp(v, m, k) == 0 for m in members):
                search(gens + [v], span(gens + [v]))

    search([], frozenset())
    return sorted(groups, key=sorted)


def _independent_generators(members: frozenset, k: int) -> list[int]:
    gens: list[int] = []
    spanned = {0}
    for v in sorted(members):
        if v in spanned:
            continue
        gens.append(v)
        spanned |= {s ^ v for s in spanned}
        if len(gens) == k:
            break
    return gens


def _tableau_mapping_to_z(gens: list[int], k: int) -> CliffordTableau:
    """Clifford U with U g_j U^dag = +Z_j for the given commuting generators."""
    dim = 2 * k
    hs: list[int] = []
    for j in range(k):
        cons = [(_dual(g, k), 1 if i == j else 0) for i, g in enumerate(gens)]
        cons += [(_dual(h, k), 0) for h in hs]
        sol = _gf2_affine_solutions(cons, dim)
        if sol is None:
            raise RuntimeError("symplectic completion failed")
        hs.append(sol[0])
    xs = []
    zs = []
    for j in range(k):
        gx, gz = _vec_to_masks(gens[j], k)
        hx, hz = _vec_to_masks(hs[j], k)
        zs.append(PauliString(k, gx, gz, 0))
        xs.append(PauliString(k, hx, hz, 0))
    v = CliffordTableau(k, xs, zs)  # V Z_j V^dag = g_j
    return v.inverse()


@functools.lru_cache(maxsize=None)
def build_mub_ensemble(k: int) -> tuple[CliffordTableau, ...]:
    """2^k + 1 Cliffords whose inverse-image bases are mutually unbiased.

    The 4^k - 1 nonidentity Paulis are partitioned into 2^k + 1 commuting
    classes, each closed under multiplication, and each member maps one class
    onto the Z-strings.
    """
    if k > 3:
        raise ValueError("MUB construction supported for k <= 3 only")
    dim = 2 * k
    all_vecs = set(range(1, 1 << dim))
    subgroups = _pairwise_commuting_subgroups(k)

    classes: list[frozenset] = []

    def partition(remaining: set) -> bool:
        if not remaining:
            return True
        pivot = min(remaining)
        for g in subgroups:
            if pivot in g and g <= remaining:
                classes.append(g)
                if partition(remaining - g):
                    return True
                classes.pop()
        return False

    if not partition(all_vecs):
        raise RuntimeError("no commuting-class partition found")
    members = []
    for cls_vecs in classes:
        gens = _independent_generators(cls_vecs, k)
        members.append(_tableau_mapping_to_z(gens, k))
    assert len(members) == (1 << k) + 1
    return tuple(members)


@functools.lru_cache(maxsize=None)
def build_stabilizer_basis_ensemble(k: int) -> tuple[CliffordTableau, ...]:
    """One Clifford per sign-free stabilizer basis: prod_i (2^(k-i) + 1) members."""
    if k > 2:
        raise ValueError("stabilizer-basis ensemble supported for k <= 2 only")
    members = []
    for group in _pairwise_commuting_subgroups(k):
        gens = _independent_generators(group, k)
        members.append(_tableau_mapping_to_z(gens, k))
    expected = 1
    for i in range(k):
        expected *= (1 << (k - i)) + 1
    assert len(members) == expected
    return tuple(members)


def sample_dense_haar(k: int, rng) -> BlockUnitary:
    """Haar-random 2^k x 2^k unitary via QR of a complex Ginibre matrix."""
    if k > 3:
        raise ValueError("dense Haar blocks supported for k <= 3 only")
    dim = 1 << k
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(g)
    d = np.diagonal(r)
    return BlockUnitary(k, matrix=q * (d / np.abs(d)))


ENSEMBLE_KINDS = ("clifford_full", "mub", "stabilizer_basis", "haar_dense")


@dataclass(frozen=True)
class EnsembleSpec:
    """Which per-block unitary distribution a shadow experiment draws from."""

    kind: str
    layout: BlockLayout

    def __post_init__(self):
        if self.kind not in ENSEMBLE_KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if self.kind == "mub":
            build_mub_ensemble(self.layout.k)
        elif self.kind == "stabilizer_basis":
            build_stabilizer_basis_ensemble(self.layout.k)

    @property
    def k(self) -> int:
        return self.layout.k

    @property
    def is_clifford(self) -> bool:
        return self.kind != "haar_dense"

    def block_candidates(self) -> tuple[CliffordTableau, ...]:
        if self.kind == "mub":
            return build_mub_ensemble(self.k)
        if self.kind == "stabilizer_basis":
            return build_stabilizer_basis_ensemble(self.k)
        if self.kind == "clifford_full" and self.k <= 2:
            return enumerate_clifford(self.k)
        raise ValueError(f"no finite candidate list for {self.kind} at k={self.k}")

    def sample_block(self, rng) -> BlockUnitary:
        if self.kind == "haar_dense":
            return sample_dense_haar(self.k, rng)
        if self.kind == "clifford_full":
            return BlockUnitary(self.k, tableau=sample_clifford_fast(self.k, rng))
        cands = self.block_candidates()
        return BlockUnitary(self.k, tableau=cands[int(rng.integers(0, len(cands)))])

    def sample(self, rng) -> LayeredBlockUnitary:
        return LayeredBlockUnitary(
            self.layout, [self.sample_block(rng) for _ in range(self.layout.nblocks)]
        )

    def to_json(self) -> dict:
        return {"kind": self.kind, "n": self.layout.n, "k": self.layout.k}

    @classmethod
    def from_json(cls, data) -> "EnsembleSpec":
        return cls(data["kind"], BlockLayout(data["n"], data["k"]))
