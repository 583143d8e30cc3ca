"""Closed-form statistics for block shadows: channel eigenvalues, shadow
norms, the pairwise f-table, V1/V2/V3 moments, exact and bounded variances,
sample-complexity and matrix-Bernstein bounds, and V-recovery fits.

Exact V-sums run on precomputed 4^n expectation tables with all pair structure
factorized over blocks, which keeps the 16^n pair loop at O(16^n) scalar work
with small-vector numpy inner loops (practical through n = 7).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .clifford import build_mub_ensemble, indicator_block
from .pauli import BlockLayout, ObservableSum, PauliString, block_weight, multiply
from .states import StateVector, all_pauli_expectations

# ---------------------------------------------------------------------------
# eigenvalues, norms, f-table


def m_eigenvalue(p: PauliString, layout: BlockLayout, ensemble_kind: str = "clifford_full") -> float:
    """Channel eigenvalue (2^k+1)^(-w_k(P)) for Clifford-type block ensembles."""
    if ensemble_kind == "haar_dense":
        raise ValueError("dense ensembles have no indicator eigenvalue; use MC")
    return float(((1 << layout.k) + 1) ** (-block_weight(p, layout)))


def shadow_norm_pauli(p: PauliString, layout: BlockLayout) -> float:
    """(2^k+1)^(w_k(P)); the worst-case second moment of the Pauli estimator."""
    return float(((1 << layout.k) + 1) ** block_weight(p, layout))


def contiguous_support_norm_bound(length: int, k: int) -> float:
    """Shadow-norm bound (2^k+1)^(l/k + 1) for contiguous support of length l."""
    return float((2**k + 1) ** (length / k + 1))


@functools.lru_cache(maxsize=None)
def _block_f_closed(k: int) -> np.ndarray:
    """Per-block f-table for full Cl(k) (and the Fact-2 ensemble), indexed by
    packed digits (x << k) | z."""
    dim = 1 << k
    size = dim * dim
    table = np.empty((size, size))
    d_plus = dim + 1
    for a in range(size):
        pa = PauliString(k, a >> k, a & (dim - 1), 0)
        for b in range(size):
            pb = PauliString(k, b >> k, b & (dim - 1), 0)
            if pa.is_identity or pb.is_identity:
                table[a, b] = 1.0
            elif a == b:
                table[a, b] = d_plus
            else:
                anti = ((pa.x & pb.z).bit_count() + (pa.z & pb.x).bit_count()) % 2
                table[a, b] = 0.0 if anti else 2.0 * d_plus / (dim + 2)
    return table


@functools.lru_cache(maxsize=None)
def _block_f_mub(k: int) -> np.ndarray:
    """Per-block f-table of the MUB ensemble, by enumeration over its members."""
    members = build_mub_ensemble(k)
    dim = 1 << k
    size = dim * dim
    ind = np.zeros((size, len(members)), dtype=np.int64)
    for idx in range(size):
        p = PauliString(k, idx >> k, idx & (dim - 1), 0)
        ind[idx] = [indicator_block(u, p) for u in members]
    m_vals = ind.mean(axis=1)
    joint = (ind @ ind.T) / len(members)
    return joint / np.outer(m_vals, m_vals)


def _block_f(k: int, ensemble_kind: str) -> np.ndarray:
    if ensemble_kind in ("clifford_full", "stabilizer_basis"):
        return _block_f_closed(k)
    if ensemble_kind == "mub":
        return _block_f_mub(k)
    raise ValueError("f-table needs a Clifford-type ensemble")


@functools.lru_cache(maxsize=None)
def _block_sign(k: int) -> np.ndarray:
    """Sign of the product of two block strings (0 where they anticommute)."""
    dim = 1 << k
    size = dim * dim
    table = np.zeros((size, size))
    for a in range(size):
        pa = PauliString(k, a >> k, a & (dim - 1), 0)
        for b in range(size):
            pb = PauliString(k, b >> k, b & (dim - 1), 0)
            prod = multiply(pa, pb)
            if prod.phase == 0:
                table[a, b] = 1.0
            elif prod.phase == 2:
                table[a, b] = -1.0
    return table


def f_pq(
    p: PauliString, q: PauliString, layout: BlockLayout, ensemble_kind: str = "clifford_full"
) -> float:
    """f(P,Q) = Pr(both conjugates z-type) / (m_P m_Q), block-factorized."""
    if p.n != layout.n or q.n != layout.n:
        raise ValueError("dimension mismatch")
    table = _block_f(layout.k, ensemble_kind)
    k = layout.k
    val = 1.0
    for i in range(layout.nblocks):
        pa = layout.block_pauli(p, i)
        pb = layout.block_pauli(q, i)
        val *= table[(pa.x << k) | pa.z, (pb.x << k) | pb.z]
    return float(val)


def useful_sums(n: int, k: int) -> dict:
    """Closed-form Pauli-sum identities used by the variance bounds."""
    if n % k:
        raise ValueError("k must divide n")
    m = n // k
    return {
        "sum_m_inv": float((8**k + 4**k - 2**k) ** m),
        "sum_f_diag": float((8**k + 4**k - 2**k) ** m),
        "sum_f_identity": float(4**n),
        "sum_f_all_bound": float((16**k + 8**k) ** m),
    }


# ---------------------------------------------------------------------------
# variance formulas


def variance_pauli_multishot(
    p: PauliString, tr_p: float, n_u: int, n_s: int, layout: BlockLayout
) -> float:
    """Exact multi-shot variance of the Pauli estimator (not just the bound)."""
    m_inv = shadow_norm_pauli(p, layout)
    return (m_inv / n_s + (n_s - 1) / n_s * m_inv * tr_p**2 - tr_p**2) / n_u


@dataclass(frozen=True)
class VarianceModel:
    v1: float
    v2: float
    v3: float
    context: dict = field(default_factory=dict)


def _block_perm(n: int, k: int) -> np.ndarray:
    """Map block-digit index (digit (x_i << k)|z_i, block 0 most significant)
    to the (x << n)|z index used by expectation tables."""
    m = n // k
    dim = 1 << k
    size = dim * dim
    perm = np.zeros(4**n, dtype=np.int64)
    for b_idx in range(4**n):
        rest = b_idx
        x = z = 0
        for i in range(m):
            digit = (rest // (size ** (m - 1 - i))) % size
            lo = n - (i + 1) * k
            x |= (digit >> k) << lo
            z |= (digit & (dim - 1)) << lo
        perm[b_idx] = (x << n) | z
    return perm


def _kron_chain(vectors) -> np.ndarray:
    out = vectors[0]
    for v in vectors[1:]:
        out = np.kron(out, v)
    return out


def _apply_block_kron(vec: np.ndarray, mats, m: int, size: int) -> np.ndarray:
    """(kron of mats) @ vec with vec indexed by block digits."""
    cube = vec.reshape([size] * m)
    for axis, mat in enumerate(mats):
        cube = np.tensordot(mat, cube, axes=([1], [axis]))
        cube = np.moveaxis(cube, 0, axis)
    return cube.reshape(-1)


def compute_V123(
    observable,
    rho: StateVector,
    layout: BlockLayout,
    ensemble_kind: str = "clifford_full",
) -> VarianceModel:
    """Exact ensemble moments V1, V2, V3 for a target observable and state.

    `observable` is either an ObservableSum or a pure StateVector (projector
    target); V3 depends on rho only.  Practical through n = 7.
    """
    n, k = layout.n, layout.k
    if n > 7:
        raise ValueError("exact V sums capped at n=7; fit from curves instead")
    m = layout.nblocks
    dim = 1 << k
    size = dim * dim
    f_blk = _block_f(k, ensemble_kind)
    sign_blk = _block_sign(k)
    h_blk = f_blk * sign_blk

    perm = _block_perm(n, k)
    tr_rho = all_pauli_expectations(rho)[perm]

    # V3: sum_R tr_rho[R]^2 * (kron of G_i)[R] / D^2
    digits = np.arange(size)
    g_vec = np.array([f_blk[digits, digits ^ r].sum() for r in range(size)])
    g_full = _kron_chain([g_vec] * m)
    d_full = float(2**n)
    v3 = float(np.dot(tr_rho**2, g_full) / d_full**2)

    if isinstance(observable, StateVector):
        tr_psi = all_pauli_expectations(observable)[perm]
        alpha = tr_psi / d_full
        a_vec = alpha * tr_rho
        v1 = float(a_vec @ _apply_block_kron(a_vec, [f_blk] * m, m, size))
        # V2: sum_R tr_rho[R] sum_P alpha_P alpha_{P xor R} h(P, P xor R)
        h_re = np.empty((size, size))  # h'[d, r] = h[d, d ^ r]
        for r in range(size):
            h_re[:, r] = h_blk[digits, digits ^ r]
        idx = np.arange(4**n)
        v2 = 0.0
        for r in range(4**n):
            if tr_rho[r] == 0.0:
                continue
            col = _kron_chain([h_re[:, (r // (size ** (m - 1 - i))) % size] for i in range(m)])
            v2 += tr_rho[r] * np.dot(alpha * col, alpha[idx ^ r])
        v2 = float(v2)
    elif isinstance(observable, ObservableSum):
        table = all_pauli_expectations(rho)
        terms = observable.terms
        v1 = v2 = 0.0
        for ca, pa in terms:
            tra = table[(pa.x << n) | pa.z]
            for cb, pb in terms:
                fv = f_pq(pa, pb, layout, ensemble_kind)
                if fv == 0.0:
                    continue
                trb = table[(pb.x << n) | pb.z]
                v1 += ca * cb * tra * trb * fv
                prod = multiply(pa, pb)
                sgn = 1.0 if prod.phase == 0 else -1.0
                v2 += ca * cb * sgn * table[(prod.x << n) | prod.z] * fv
        v1, v2 = float(v1), float(v2)
    else:
        raise TypeError("observable must be an ObservableSum or StateVector")
    return VarianceModel(v1, v2, v3, {"n": n, "k": k, "ensemble": ensemble_kind})


def variance_fidelity(v1: float, v2: float, fid: float, n_u: int, n_s: int) -> float:
    """Exact multi-shot variance of a projector-observable estimate."""
    return (v2 / n_s + (n_s - 1) / n_s * v1 - fid**2) / n_u


def purity_second_moment_weights(n_s: int) -> tuple[float, float, float]:
    """Exact pair-collision weights of E[p2_hat(U)^2] over shot-index classes.

    C(N_S,2)^2 ordered pairs of pairs split into disjoint / one-shared /
    identical classes; weights sum to 1.
    """
    pairs = n_s * (n_s - 1) / 2.0
    w_shared = 2.0 * (n_s - 2) / pairs
    w_same = 1.0 / pairs
    w_disjoint = 1.0 - w_shared - w_same
    return w_disjoint, w_shared, w_same


def variance_purity(
    v1: float, v2: float, v3: float, n_u: int, n_s: int, p2: float
) -> dict:
    """Exact purity-estimator variance (collision-weight assembly) plus the
    printed bound form (1/N_U)(2 V3/(N_S-1)^2 + 4 V2/N_S + V1 - p2^2)."""
    if n_s < 2:
        raise ValueError("need at least two shots")
    w1, w2, w3 = purity_second_moment_weights(n_s)
    second = w1 * v1 + w2 * v2 + w3 * v3
    exact = (second - p2**2) / n_u
    bound = (2.0 * v3 / (n_s - 1) ** 2 + 4.0 * v2 / n_s + v1 - p2**2) / n_u
    return {"exact": exact, "bound": bound, "second_moment": second}


def variance_crm(
    m_p: float, tr_rho_p: float, tr_sigma_p: float, n_rho: int, n_sigma: int, n_u: int
) -> dict:
    """CRM Pauli variance: the standard bracket bound and the exact value
    (bound minus the squared mean difference)."""
    bracket = (
        1.0 / n_rho
        + (n_rho - 1) / n_rho * tr_rho_p**2
        + 1.0 / n_sigma
        + (n_sigma - 1) / n_sigma * tr_sigma_p**2
        - 2.0 * tr_rho_p * tr_sigma_p
    )
    bound = bracket / (m_p * n_u)
    exact = bound - (tr_rho_p - tr_sigma_p) ** 2 / n_u
    return {"bound": bound, "exact": exact}


def variance_sff_typical(n: int, k: int, k_value: float, m_runs: int) -> float:
    """Haar-typical SFF estimator variance (1/M)(2^-n (1 + 2^-k - 4^-k)^(n/k) - K^2)."""
    second = 2.0**-n * (1.0 + 2.0**-k - 4.0**-k) ** (n // k)
    return (second - k_value**2) / m_runs


def sff_second_moment_exact(h: ObservableSum, t: float, layout: BlockLayout) -> float:
    """Exact E[((-2^k)^-|s|)^2] for the echo protocol: a partial-trace sum
    sum_S a^(m-|S|) b^|S| Tr[(Tr_S T)(Tr_S T)^dag] with a = D^-2, b = (D-1)/D^3."""
    from .states import evolution_operator

    n, k = layout.n, layout.k
    m = layout.nblocks
    dim = 1 << k
    a_coef = dim**-2.0
    b_coef = (dim - 1) / dim**3.0
    prop = evolution_operator(h, t)
    tensor = prop.reshape([dim] * (2 * m))
    total = 0.0
    for mask in range(1 << m):
        blocks = [i for i in range(m) if (mask >> i) & 1]
        reduced = tensor
        removed = 0
        for i in blocks:
            axis = i - removed
            reduced = np.trace(reduced, axis1=axis, axis2=axis + (m - removed))
            removed += 1
        c_s = float(np.sum(np.abs(reduced) ** 2))
        total += a_coef ** (m - len(blocks)) * b_coef ** len(blocks) * c_s
    return total


def variance_sff_exact(h: ObservableSum, t: float, layout: BlockLayout, m_runs: int) -> float:
    from .states import evolution_operator

    tr = np.trace(evolution_operator(h, t))
    k_value = abs(tr) ** 2 / 4.0 ** layout.n
    return (sff_second_moment_exact(h, t, layout) - k_value**2) / m_runs


# ---------------------------------------------------------------------------
# bounds


@dataclass(frozen=True)
class BoundReport:
    quantity: str
    value: float
    formula: str
    inputs: dict


def purity_sample_complexity(n: int, k: int, eps: float) -> BoundReport:
    """T = max(3^(n/k)/eps^2, 2^n/eps) with the alpha-dependent constants of
    the two variance terms reported alongside."""
    if n % k:
        raise ValueError("k must divide n")
    alpha = n / (k * 2**k)
    term_pauli = 3.0 ** (n // k) / eps**2
    term_swap = 2.0**n / eps
    return BoundReport(
        quantity="purity_sample_complexity",
        value=max(term_pauli, term_swap),
        formula="max(3^(n/k)/eps^2, 2^n/eps)",
        inputs={
            "n": n,
            "k": k,
            "eps": eps,
            "alpha": alpha,
            "term_pauli": term_pauli,
            "term_swap": term_swap,
            "constant_pauli": 4.0 * math.exp(alpha / 3.0),
            "constant_swap": math.sqrt(2.0) * math.exp(alpha),
        },
    )


def bernstein_bound(r: int, k: int, eps: float, t: int | None = None, delta: float = 0.01) -> BoundReport:
    """Matrix-Bernstein tail for tomography of a contiguous r-qubit region.

    sigma^2 <= (2^(k+1)-1)^(r/k), R = 2^k+1; the trace-norm tail is
    2*2^r exp(-3 T eps^2 / (8 * 4^r sigma^2)); with t=None, solves for the T
    that reaches failure probability delta.
    """
    if r % k:
        raise ValueError("k must divide the region size")
    sigma_sq = float((2 ** (k + 1) - 1) ** (r // k))
    r_max = float(2**k + 1)
    denom = 8.0 * 4.0**r * sigma_sq
    if t is not None:
        tail = 2.0 * 2.0**r * math.exp(-3.0 * t * eps**2 / denom)
        return BoundReport(
            "bernstein_tail",
            tail,
            "2*2^r*exp(-3*T*eps^2/(8*4^r*sigma^2))",
            {"r": r, "k": k, "eps": eps, "T": t, "sigma_sq": sigma_sq, "R": r_max},
        )
    t_needed = math.log(2.0 * 2.0**r / delta) * denom / (3.0 * eps**2)
    return BoundReport(
        "bernstein_samples",
        t_needed,
        "ln(2*2^r/delta)*8*4^r*sigma^2/(3*eps^2)",
        {"r": r, "k": k, "eps": eps, "delta": delta, "sigma_sq": sigma_sq, "R": r_max},
    )


def worst_case_fidelity_norm(n: int, k: int) -> dict:
    """Worst-case projector shadow norm: the 3^(n/k) e^(alpha/3) bound and the
    exact block-product-state value."""
    if n % k:
        raise ValueError("k must divide n")
    alpha = n / (k * 2**k)
    d = float(2**k)
    bracket = (d + 1) / (d + 2) * (3.0 - 5.0 / d + 2.0 / d**2) + 2.0 / d - 1.0 / d**2
    return {
        "bound": 3.0 ** (n // k) * math.exp(alpha / 3.0),
        "exact_product_state": bracket ** (n // k),
        "bracket": bracket,
    }


# ---------------------------------------------------------------------------
# fits


def fit_V_from_std(
    curve,
    n_u: int,
    mode: str,
    fid: float | None = None,
    p2: float | None = None,
    v2: float = 0.0,
) -> dict:
    """Recover V parameters from an std(N_S) curve at fixed N_U.

    mode="fidelity": fits (V1, V2) against the multi-shot variance model,
    fid required.  mode="purity": fits (V1, V3) with p2 required and V2 held
    at the supplied value.  Needs >= 4 distinct N_S points.
    """
    pts = sorted((int(ns), float(s)) for ns, s in curve)
    ns_vals = np.array([p[0] for p in pts], dtype=float)
    stds = np.array([p[1] for p in pts])
    if len(set(ns_vals)) < 4:
        raise ValueError("need at least 4 distinct N_S points")
    if np.ptp(stds) == 0.0:
        raise ValueError("degenerate curve: all std values equal")

    if mode == "fidelity":
        if fid is None:
            raise ValueError("fidelity mode needs the known mean value")

        def model(params):
            w1, w2 = params
            var = (w2 / ns_vals + (ns_vals - 1) / ns_vals * w1 - fid**2) / n_u
            return np.sqrt(np.maximum(var, 0.0)) - stds

        x0 = np.array([stds[-1] ** 2 * n_u + fid**2, stds[0] ** 2 * n_u + fid**2])
        res = scipy.optimize.least_squares(model, x0, bounds=(0.0, np.inf))
        return {
            "V1": float(res.x[0]),
            "V2": float(res.x[1]),
            "residual": float(np.linalg.norm(res.fun)),
        }
    if mode == "purity":
        if p2 is None:
            raise ValueError("purity mode needs the known purity")

        def model(params):
            w1, w3 = np.abs(params)
            var = np.array(
                [
                    variance_purity(w1, v2, w3, n_u, int(ns), p2)["exact"]
                    for ns in ns_vals
                ]
            )
            return np.sqrt(np.maximum(var, 0.0)) - stds

        x0 = np.array([stds[-1] ** 2 * n_u + p2**2, stds[0] ** 2 * n_u])
        res = scipy.optimize.least_squares(model, x0, bounds=(0.0, np.inf))
        return {
            "V1": float(res.x[0]),
            "V3": float(res.x[1]),
            "residual": float(np.linalg.norm(res.fun)),
        }
    raise ValueError("mode must be 'fidelity' or 'purity'")


# ---------------------------------------------------------------------------
# empirical-variance comparison helper


def variance_zscore(samples, predicted: float) -> float:
    """(sample variance - predicted) / SE(sample variance), SE via the fourth
    central moment (no normality assumption)."""
    x = np.asarray(samples, dtype=float)
    r = len(x)
    s2 = np.var(x, ddof=1)
    m4 = np.mean((x - x.mean()) ** 4)
    se = math.sqrt(max(m4 - s2**2 * (r - 3) / (r - 1), 1e-300) / r)
    return float((s2 - predicted) / se)
