"""Greedy derandomization of block measurement bases.

Each basis is chosen block by block from a small per-block candidate set
(2^k + 1 mutually unbiased members by default).  Every step minimizes the
conditional expected confidence bound of the still-random completion, which
guarantees the final plan's confidence never exceeds the all-random average.

Because only one factor of the conditional expectation depends on the
candidate, the argmin reduces to maximizing the nonnegative weighted coverage
sum_l w_l 1{candidate keeps target l alive}; the full conditional expression
is kept (and tested) as the reference implementation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .clifford import (
    BlockUnitary,
    EnsembleSpec,
    LayeredBlockUnitary,
    indicator,
    indicator_block,
)
from .pauli import BlockLayout, PauliString, block_weight


@dataclass(frozen=True)
class DerandConfig:
    eps: float
    layout: BlockLayout
    candidate_kind: str = "mub"
    basis_budget: int | None = None
    min_coverage: int | None = None
    include_future_factor: bool = True
    max_bases: int = 200_000

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if (self.basis_budget is None) == (self.min_coverage is None):
            raise ValueError("set exactly one of basis_budget / min_coverage")
        if self.candidate_kind not in ("mub", "stabilizer_basis", "clifford_full"):
            raise ValueError("unsupported candidate kind")

    @property
    def nu(self) -> float:
        return 1.0 - math.exp(-self.eps**2 / 2.0)

    def candidates(self):
        return EnsembleSpec(self.candidate_kind, self.layout).block_candidates()


@dataclass(frozen=True)
class MeasurementPlan:
    config: DerandConfig
    targets: tuple
    bases: tuple  # LayeredBlockUnitary per basis
    shots_per_basis: int = 1

    def to_json(self) -> dict:
        cov = coverage_report(self)
        return {
            "config": {
                "eps": self.config.eps,
                "n": self.config.layout.n,
                "k": self.config.layout.k,
                "candidate_kind": self.config.candidate_kind,
                "basis_budget": self.config.basis_budget,
                "min_coverage": self.config.min_coverage,
                "shots_per_basis": self.shots_per_basis,
            },
            "bases": [u.to_json() for u in self.bases],
            "coverage": {p.to_text(): cov[p] for p in self.targets},
            "conf": conf(self.targets, self.bases, self.config.eps),
            "expected_conf": expected_conf(
                self.targets, len(self.bases), self.config.layout, self.config.eps
            ),
        }


def conf(targets, bases, eps: float) -> float:
    """CONF = sum_l exp(-eps^2/2 * M_l) with M_l the coverage counts."""
    nu_exp = -(eps**2) / 2.0
    total = 0.0
    for p in targets:
        m_l = sum(indicator(u, p) for u in bases)
        total += math.exp(nu_exp * m_l)
    return total


def expected_conf(targets, m_bases: int, layout: BlockLayout, eps: float) -> float:
    """Average confidence of m all-random bases: sum_l (1 - nu/(2^k+1)^w_l)^M."""
    nu = 1.0 - math.exp(-(eps**2) / 2.0)
    dplus = (1 << layout.k) + 1
    return sum(
        (1.0 - nu / dplus ** block_weight(p, layout)) ** m_bases for p in targets
    )


def conditional_expected_conf(
    targets,
    fixed_bases,
    partial_blocks,
    m_bases: int,
    eps: float,
    layout: BlockLayout,
    include_future_factor: bool = True,
) -> float:
    """Expected confidence given completed bases and a partially chosen one.

    `fixed_bases` are the finished bases; `partial_blocks` holds the tableaux
    already fixed for blocks 0..r-1 of the current basis.  Undetermined blocks
    contribute their random coverage probability; later bases contribute the
    all-random factor unless `include_future_factor` is off.
    """
    nu = 1.0 - math.exp(-(eps**2) / 2.0)
    dplus = (1 << layout.k) + 1
    m_done = len(fixed_bases)
    r = len(partial_blocks)
    if r > layout.nblocks:
        raise ValueError("more partial blocks than the layout has")
    if m_done == m_bases and r == 0:
        return conf(targets, fixed_bases, eps)
    future = m_bases - m_done - 1
    if future < 0:
        raise ValueError("fixed bases exceed the basis budget")
    total = 0.0
    for p in targets:
        val = 1.0
        for u in fixed_bases:
            val *= 1.0 - nu * indicator(u, p)
        alive = 1.0
        for j, tab in enumerate(partial_blocks):
            alive *= indicator_block(tab, layout.block_pauli(p, j))
        w_rem = sum(
            1
            for j in range(r, layout.nblocks)
            if not layout.block_pauli(p, j).is_identity
        )
        val *= 1.0 - nu * alive / dplus**w_rem
        if include_future_factor:
            val *= (1.0 - nu / dplus ** block_weight(p, layout)) ** future
        total += val
    return total


def derandomize(targets, config: DerandConfig) -> MeasurementPlan:
    """Greedy plan: per basis and per block pick the candidate minimizing the
    conditional expected confidence; ties go to the lowest candidate index."""
    targets = tuple(targets)
    if not targets:
        raise ValueError("no targets given")
    layout = config.layout
    if any(p.n != layout.n for p in targets):
        raise ValueError("target size does not match layout")
    nu = config.nu
    dplus = (1 << layout.k) + 1
    cands = config.candidates()
    n_t, n_b, n_c = len(targets), layout.nblocks, len(cands)

    # ind_table[l, j, c] = 1{candidate c keeps target l z-type on block j}
    ind_table = np.zeros((n_t, n_b, n_c), dtype=float)
    w_suffix = np.zeros((n_t, n_b + 1), dtype=np.int64)
    m_l = np.zeros(n_t)
    for l, p in enumerate(targets):
        for j in range(n_b):
            sub = layout.block_pauli(p, j)
            for c, tab in enumerate(cands):
                ind_table[l, j, c] = indicator_block(tab, sub)
        for j in range(n_b - 1, -1, -1):
            w_suffix[l, j] = w_suffix[l, j + 1] + (
                not layout.block_pauli(p, j).is_identity
            )
        m_l[l] = dplus ** (-float(w_suffix[l, 0]))

    adaptive = config.min_coverage is not None
    budget = config.max_bases if adaptive else config.basis_budget
    use_future = config.include_future_factor and not adaptive

    prefix = np.ones(n_t)
    coverage = np.zeros(n_t, dtype=np.int64)
    bases = []
    for m in range(budget):
        if adaptive:
            unmet = coverage < config.min_coverage
            if not unmet.any():
                break
            # met targets drop out; exponents are shifted so extreme eps
            # values cannot underflow the unmet weights
            shift = coverage[unmet].min()
            base_w = np.where(unmet, (1.0 - nu) ** (coverage - shift), 0.0)
        else:
            base_w = prefix
        future = (1.0 - nu * m_l) ** (budget - m - 1) if use_future else np.ones(n_t)
        alive = np.ones(n_t)
        chosen = []
        for j in range(n_b):
            weights = base_w * alive * dplus ** (-w_suffix[:, j + 1].astype(float)) * future
            benefit = weights @ ind_table[:, j, :]
            c_star = int(np.argmax(benefit > benefit.max() - 1e-12))
            chosen.append(c_star)
            alive = alive * ind_table[:, j, c_star]
        bases.append(
            LayeredBlockUnitary(
                layout, [BlockUnitary(layout.k, tableau=cands[c]) for c in chosen]
            )
        )
        covered = alive.astype(np.int64)
        coverage += covered
        prefix *= 1.0 - nu * covered
    else:
        if adaptive and coverage.min() < config.min_coverage:
            raise RuntimeError("basis cap reached before the coverage target")
    return MeasurementPlan(config, targets, tuple(bases))


def coverage_report(plan: MeasurementPlan) -> dict:
    """Exact per-target coverage counts M_l."""
    return {
        p: sum(indicator(u, p) for u in plan.bases) for p in plan.targets
    }
