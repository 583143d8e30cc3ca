"""Shadow-data acquisition and estimators built on block measurement records.

A dataset holds N_U unitary records with N_S bitstrings each.  Estimators use
two interchangeable code paths: a sign-table path for Clifford blocks and a
dense-diagonal path that also covers Haar blocks.  The workhorse identity is

    Tr(U^dag |b><b| U  M^-1(U^dag |c><c| U)) = prod_i [(2^k+1) delta_{b_i,c_i} - 1]

which turns snapshot overlaps into per-block bit comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .clifford import EnsembleSpec, LayeredBlockUnitary
from .pauli import BlockLayout, ObservableSum, PauliString, block_weight
from .states import StateVector, apply_block_unitary, expectation_pauli, sample_bitstrings

# ---------------------------------------------------------------------------
# channel


def shadow_channel_forward(a: np.ndarray, k: int) -> np.ndarray:
    """M_k(A) = (A + Tr(A) I) / (2^k + 1)."""
    dim = 1 << k
    if a.shape != (dim, dim):
        raise ValueError("operator dimension does not match k")
    return (a + np.trace(a) * np.eye(dim)) / (dim + 1)


def shadow_channel_inverse(a: np.ndarray, k: int) -> np.ndarray:
    """M_k^-1(A) = (2^k + 1) A - Tr(A) I."""
    dim = 1 << k
    if a.shape != (dim, dim):
        raise ValueError("operator dimension does not match k")
    return (dim + 1) * a - np.trace(a) * np.eye(dim)


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True, eq=False)
class ShadowRecord:
    unitary: LayeredBlockUnitary
    bitstrings: np.ndarray  # integer basis indices, qubit 0 = MSB

    def __post_init__(self):
        if len(self.bitstrings) < 1:
            raise ValueError("record needs at least one bitstring")


@dataclass(frozen=True, eq=False)
class ShadowDataset:
    layout: BlockLayout
    ensemble: EnsembleSpec
    seed: int
    n_u: int
    n_s: int
    records: tuple
    noise_tag: str = ""

    @property
    def n(self) -> int:
        return self.layout.n

    @property
    def k(self) -> int:
        return self.layout.k

    def to_json(self) -> dict:
        return {
            "meta": {
                "n": self.layout.n,
                "k": self.layout.k,
                "ensemble": self.ensemble.to_json(),
                "seed": self.seed,
                "noise_tag": self.noise_tag,
                "N_U": self.n_u,
                "N_S": self.n_s,
            },
            "records": [
                {
                    "unitary": r.unitary.to_json(),
                    "bitstrings": [format(int(b), f"0{self.layout.n}b") for b in r.bitstrings],
                }
                for r in self.records
            ],
        }

    @classmethod
    def from_json(cls, data) -> "ShadowDataset":
        meta = data["meta"]
        layout = BlockLayout(meta["n"], meta["k"])
        records = tuple(
            ShadowRecord(
                LayeredBlockUnitary.from_json(r["unitary"]),
                np.array([int(b, 2) for b in r["bitstrings"]], dtype=np.int64),
            )
            for r in data["records"]
        )
        return cls(
            layout=layout,
            ensemble=EnsembleSpec.from_json(meta["ensemble"]),
            seed=meta["seed"],
            n_u=meta["N_U"],
            n_s=meta["N_S"],
            records=records,
            noise_tag=meta.get("noise_tag", ""),
        )


def record_streams(seed: int, index: int):
    """(unitary rng, measurement rng) for one record; independent of state,
    noise, and worker schedule."""
    child = np.random.SeedSequence(entropy=seed).spawn(index + 1)[index]
    u_ss, m_ss = child.spawn(2)
    return np.random.default_rng(u_ss), np.random.default_rng(m_ss)


def acquire(
    psi: StateVector,
    ensemble: EnsembleSpec,
    n_u: int,
    n_s: int,
    seed: int,
    noise=None,
    measure_seed: int | None = None,
) -> ShadowDataset:
    """Sample N_U unitaries with N_S Born samples each, optionally through a
    Pauli noise model (trajectory unraveling).

    The unitary sequence depends on `seed` only, so two acquisitions with the
    same seed share unitaries.  Distributed protocols (inner product, CRM with
    a measured bias state) must pass distinct `measure_seed` values so the two
    parties' measurement randomness stays independent.
    """
    if ensemble.layout.n != psi.n:
        raise ValueError("ensemble layout does not match state")
    records = []
    root = np.random.SeedSequence(entropy=seed)
    children = root.spawn(n_u)
    for ridx, child in enumerate(children):
        u_ss, m_ss = child.spawn(2)
        if measure_seed is not None:
            m_ss = np.random.SeedSequence(entropy=[measure_seed, ridx])
        rng_u = np.random.default_rng(u_ss)
        rng_m = np.random.default_rng(m_ss)
        unitary = ensemble.sample(rng_u)
        if noise is None:
            rotated = apply_block_unitary(psi, unitary)
            bits = sample_bitstrings(rotated, n_s, rng_m)
        else:
            bits = noise.sample_bitstrings(psi, unitary, n_s, rng_m)
        records.append(ShadowRecord(unitary, np.asarray(bits, dtype=np.int64)))
    return ShadowDataset(
        layout=ensemble.layout,
        ensemble=ensemble,
        seed=seed,
        n_u=n_u,
        n_s=n_s,
        records=tuple(records),
        noise_tag="" if noise is None else noise.tag(),
    )


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class EstimateResult:
    mean: float
    stderr: float
    per_record: np.ndarray = field(repr=False)


_BOOTSTRAP_RESAMPLES = 1000


def aggregate(per_record: np.ndarray, median_groups: int | None = None) -> EstimateResult:
    """Mean (or median-of-means) with bootstrap standard error over records."""
    vals = np.asarray(per_record, dtype=float)
    m = len(vals)
    if median_groups:
        bounds = np.linspace(0, m, median_groups + 1).astype(int)
        groups = np.array([vals[a:b].mean() for a, b in zip(bounds[:-1], bounds[1:])])
        mean = float(np.median(groups))
    else:
        mean = math.fsum(vals) / m
    if m < 2 or np.ptp(vals) == 0:
        return EstimateResult(mean, 0.0, vals)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=[0xB0075, m]))
    if m * _BOOTSTRAP_RESAMPLES <= 2_000_000:
        idx = rng.integers(0, m, size=(_BOOTSTRAP_RESAMPLES, m))
        if median_groups:
            stderr = float(np.std([np.median(
                [vals[row[a:b]].mean() for a, b in zip(bounds[:-1], bounds[1:])]
            ) for row in idx]))
        else:
            stderr = float(np.std(vals[idx].mean(axis=1)))
    else:
        stderr = float(np.std(vals, ddof=1) / np.sqrt(m))
    return EstimateResult(mean, stderr, vals)


# ---------------------------------------------------------------------------
# per-record machinery


def _pauli_weights_for_record(record: ShadowRecord, layout: BlockLayout, p: PauliString):
    """Array of Tr(U p U^dag |b><b|) over the record's shots."""
    u = record.unitary
    bits = record.bitstrings
    if u.all_tableau:
        q = u.conjugate(p)
        if q.x:
            return np.zeros(len(bits))
        zmask = np.int64(q.z)
        par = _parity64(bits & zmask)
        return q.sign * (1.0 - 2.0 * par)
    # dense path: product over blocks of (2^k+1) <b_i| u P_i u^dag |b_i> - Tr(P_i)
    vals = np.ones(len(bits))
    dplus = (1 << layout.k) + 1
    for i, blk in enumerate(u.blocks):
        sub = layout.block_pauli(p, i)
        if sub.is_identity:
            continue
        ud = blk.dense()
        rot = ud @ sub.to_matrix() @ ud.conj().T
        diag = np.real(np.diagonal(rot))
        subs = (bits >> layout.block_bits(i)[1]) & ((1 << layout.k) - 1)
        vals = vals * (dplus * diag[subs])
    return vals


def _parity64(arr: np.ndarray) -> np.ndarray:
    v = arr.copy()
    for shift in (32, 16, 8, 4, 2, 1):
        v ^= v >> shift
    return (v & 1).astype(float)


def m_inverse(p: PauliString, layout: BlockLayout) -> float:
    return float(((1 << layout.k) + 1) ** block_weight(p, layout))


def estimate_pauli(
    ds: ShadowDataset, p: PauliString, median_groups: int | None = None
) -> EstimateResult:
    """Unbiased estimate of Tr(rho P) from the dataset."""
    if p.n != ds.n:
        raise ValueError("dimension mismatch")
    if p.is_identity:
        return EstimateResult(float(p.sign), 0.0, np.full(ds.n_u, float(p.sign)))
    scale = p.sign * m_inverse(p, ds.layout)
    base = p.with_phase(0)
    per_record = np.array(
        [scale * _pauli_weights_for_record(r, ds.layout, base).mean() for r in ds.records]
    )
    return aggregate(per_record, median_groups)


def estimate_observable(
    ds: ShadowDataset, obs: ObservableSum, median_groups: int | None = None
) -> EstimateResult:
    """One-pass estimate of sum_P alpha_P Tr(rho P); snapshots shared by terms."""
    if obs.n != ds.n:
        raise ValueError("dimension mismatch")
    scaled = [(c * m_inverse(p, ds.layout), p) for c, p in obs.terms]
    per_record = np.empty(ds.n_u)
    for ridx, rec in enumerate(ds.records):
        acc = 0.0
        for cm, p in scaled:
            if p.is_identity:
                acc += cm / m_inverse(p, ds.layout)
                continue
            acc += cm * _pauli_weights_for_record(rec, ds.layout, p).mean()
        per_record[ridx] = acc
    return aggregate(per_record, median_groups)


def _pair_kernel_transform(tensor: np.ndarray, n: int, k: int) -> np.ndarray:
    """Apply W = (2^k+1) I - J on every block axis of a 2^n table."""
    m = n // k
    dim = 1 << k
    dplus = dim + 1
    cube = tensor.reshape([dim] * m)
    for axis in range(m):
        s = cube.sum(axis=axis, keepdims=True)
        cube = dplus * cube - s
    return cube.reshape(-1)


def fidelity_values_for_record(
    record: ShadowRecord, layout: BlockLayout, target: StateVector
) -> np.ndarray:
    """Tr(Psi rho-hat) per shot, via the diagonal form in the rotated frame."""
    rotated = apply_block_unitary(target, record.unitary)
    table = _pair_kernel_transform(np.abs(rotated.amps) ** 2, layout.n, layout.k)
    return table[record.bitstrings]


def estimate_fidelity(ds: ShadowDataset, target: StateVector) -> EstimateResult:
    """Unbiased estimate of <Psi| rho |Psi> for a pure target."""
    if target.n != ds.n:
        raise ValueError("dimension mismatch")
    per_record = np.array(
        [fidelity_values_for_record(r, ds.layout, target).mean() for r in ds.records]
    )
    return aggregate(per_record)


def _block_substrings(bits: np.ndarray, layout: BlockLayout) -> list[np.ndarray]:
    mask = (1 << layout.k) - 1
    return [
        (bits >> layout.block_bits(i)[1]) & mask for i in range(layout.nblocks)
    ]


def _pair_values(b: np.ndarray, c: np.ndarray, layout: BlockLayout) -> np.ndarray:
    """Matrix of prod_i [(2^k+1) delta - 1] over all bitstring pairs."""
    dplus = (1 << layout.k) + 1
    out = np.ones((len(b), len(c)))
    for sb, sc in zip(_block_substrings(b, layout), _block_substrings(c, layout)):
        out *= dplus * (sb[:, None] == sc[None, :]) - 1.0
    return out


def estimate_purity(ds: ShadowDataset) -> EstimateResult:
    """Unbiased estimate of Tr(rho^2) from within-record shot pairs."""
    if ds.n_s < 2:
        raise ValueError("purity needs at least two shots per unitary")
    per_record = np.empty(ds.n_u)
    for ridx, rec in enumerate(ds.records):
        k_mat = _pair_values(rec.bitstrings, rec.bitstrings, ds.layout)
        n_s = len(rec.bitstrings)
        iu = np.triu_indices(n_s, k=1)
        per_record[ridx] = k_mat[iu].mean()
    return aggregate(per_record)


def estimate_inner_product(ds_rho: ShadowDataset, ds_sigma: ShadowDataset) -> EstimateResult:
    """Unbiased estimate of Tr(rho sigma) from datasets sharing unitaries."""
    if ds_rho.n_u != ds_sigma.n_u:
        raise ValueError("record counts differ")
    for a, b in zip(ds_rho.records, ds_sigma.records):
        if not a.unitary.same_as(b.unitary):
            raise ValueError("datasets do not share unitary sequences")
    per_record = np.array(
        [
            _pair_values(a.bitstrings, b.bitstrings, ds_rho.layout).mean()
            for a, b in zip(ds_rho.records, ds_sigma.records)
        ]
    )
    return aggregate(per_record)


def crm_estimate(
    ds_rho: ShadowDataset,
    sigma: StateVector,
    obs: ObservableSum,
    mode: str = "old",
    ds_sigma: ShadowDataset | None = None,
    report=None,
) -> EstimateResult:
    """Common-randomized-measurement estimate of Tr(O rho) with bias state sigma.

    mode="old" subtracts the per-unitary closed form m_P^-1 Tr(sigma P) 1{...}
    (Clifford ensembles only); mode="new" subtracts an empirical estimate from
    a sigma dataset sharing the unitaries.  `report` optionally rescales the
    measured parts by calibrated amplification factors.
    """
    if obs.n != ds_rho.n or sigma.n != ds_rho.n:
        raise ValueError("dimension mismatch")
    if mode not in ("old", "new"):
        raise ValueError("mode must be 'old' or 'new'")
    if mode == "new":
        if ds_sigma is None:
            raise ValueError("mode='new' needs a sigma dataset")
        for a, b in zip(ds_rho.records, ds_sigma.records):
            if not a.unitary.same_as(b.unitary):
                raise ValueError("sigma dataset does not share unitaries")
    elif not ds_rho.ensemble.is_clifford:
        raise ValueError("mode='old' requires a Clifford ensemble")

    layout = ds_rho.layout
    terms = []
    for c, p in obs.terms:
        alpha = 1.0 if report is None else report.factor(p, layout)
        terms.append((c, p, m_inverse(p, layout), expectation_pauli(sigma, p), alpha))

    per_record = np.empty(ds_rho.n_u)
    for ridx, rec in enumerate(ds_rho.records):
        acc = 0.0
        for c, p, m_inv, tr_sigma, alpha in terms:
            if p.is_identity:
                acc += c
                continue
            rho_part = alpha * m_inv * _pauli_weights_for_record(rec, layout, p).mean()
            if mode == "old":
                ind = 1.0 if abs(rec.unitary.conjugate(p).x) == 0 else 0.0
                sigma_part = m_inv * tr_sigma * ind
            else:
                srec = ds_sigma.records[ridx]
                sigma_part = alpha * m_inv * _pauli_weights_for_record(srec, layout, p).mean()
            acc += c * (rho_part - sigma_part + tr_sigma)
        per_record[ridx] = acc
    return aggregate(per_record)


def sigma_old_pauli_value(
    unitary: LayeredBlockUnitary, p: PauliString, sigma: StateVector, layout: BlockLayout
) -> float:
    """Tr(P sigma-hat_old) = m_P^-1 Tr(sigma P) 1{U P U^dag z-type}."""
    ind = 1.0 if unitary.conjugate(p).x == 0 else 0.0
    return m_inverse(p, layout) * expectation_pauli(sigma, p) * ind


# ---------------------------------------------------------------------------
# spectral form factor


def sff_values(
    h: ObservableSum, t: float, layout: BlockLayout, m_runs: int, seed: int
) -> np.ndarray:
    """Echo-protocol samples of (-2^k)^(-|s|_k); mean estimates |Tr e^-iHt|^2/4^n.

    Per run: U = tensor of Cl(k) blocks, prepare U|0>, evolve e^{-iHt},
    apply U^dag, measure; |s|_k counts blocks with a nonzero substring.
    """
    from .states import evolution_operator

    n = layout.n
    if n > 10:
        raise ValueError("spectral form factor capped at n=10")
    if h.n != n:
        raise ValueError("dimension mismatch")
    ensemble = EnsembleSpec("clifford_full", layout)
    prop = evolution_operator(h, t)
    base = -float(1 << layout.k)
    vals = np.empty(m_runs)
    root = np.random.SeedSequence(entropy=seed)
    for ridx, child in enumerate(root.spawn(m_runs)):
        rng = np.random.default_rng(child)
        unitary = ensemble.sample(rng)
        phi = np.zeros(1 << n, dtype=complex)
        phi[0] = 1.0
        psi = StateVector(n, phi)
        psi = apply_block_unitary(psi, unitary)
        evolved = prop @ psi.amps
        evolved /= np.linalg.norm(evolved)
        back = apply_block_unitary(
            StateVector(n, evolved), _dagger_layer(unitary)
        )
        s = sample_bitstrings(back, 1, rng)[0]
        nonzero = sum(
            1 for sub in _block_substrings(np.array([s]), layout) if sub[0] != 0
        )
        vals[ridx] = base ** (-nonzero)
    return vals


def _dagger_layer(u: LayeredBlockUnitary) -> LayeredBlockUnitary:
    from .clifford import BlockUnitary

    blocks = []
    for blk in u.blocks:
        if blk.is_tableau:
            blocks.append(BlockUnitary(blk.k, tableau=blk.tableau.inverse()))
        else:
            blocks.append(BlockUnitary(blk.k, matrix=blk.matrix.conj().T))
    return LayeredBlockUnitary(u.layout, blocks)


def sff_estimate(
    h: ObservableSum, t: float, layout: BlockLayout, m_runs: int, seed: int
) -> EstimateResult:
    vals = sff_values(h, t, layout, m_runs, seed)
    return aggregate(vals)
