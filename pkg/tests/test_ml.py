import numpy as np
import pytest

from blockshadow.clifford import EnsembleSpec
from blockshadow.ml import (
    PhaseScanResult,
    block_snapshots,
    default_gamma,
    em_kernel_params,
    fit_tanh,
    kernel_matrix,
    kernel_pca,
    phase_scan,
    shadow_kernel,
)
from blockshadow.pauli import BlockLayout
from blockshadow.shadows import acquire, shadow_channel_inverse
from blockshadow.states import bell_pairs_state, random_circuit_state, zero_state


def test_block_snapshot_identity_record():
    layout = BlockLayout(1, 1)
    from blockshadow.clifford import LayeredBlockUnitary
    from blockshadow.shadows import ShadowRecord

    rec = ShadowRecord(LayeredBlockUnitary.identity(layout), np.array([0]))
    snaps = block_snapshots(rec, layout)
    assert snaps.shape == (1, 1, 2, 2)
    assert np.allclose(snaps[0, 0], np.diag([2.0, -1.0]))


def test_block_snapshot_trace_invariants():
    rng = np.random.default_rng(0)
    for k in (1, 2):
        layout = BlockLayout(2 * k, k)
        psi = random_circuit_state(2 * k, 4, rng)
        ds = acquire(psi, EnsembleSpec("clifford_full", layout), 20, 3, seed=5)
        want_tr2 = (2**k + 1) ** 2 - 2 * (2**k + 1) + 2**k
        for rec in ds.records:
            snaps = block_snapshots(rec, layout)
            for s in range(snaps.shape[0]):
                for i in range(snaps.shape[1]):
                    mat = snaps[s, i]
                    assert np.trace(mat).real == pytest.approx(1.0, abs=1e-10)
                    assert np.trace(mat @ mat).real == pytest.approx(want_tr2, abs=1e-9)


def test_block_snapshot_average_recovers_reduced_state():
    rng = np.random.default_rng(1)
    layout = BlockLayout(4, 2)
    psi = random_circuit_state(4, 6, rng)
    ds = acquire(psi, EnsembleSpec("clifford_full", layout), 8000, 2, seed=6)
    acc = np.zeros((2, 4, 4), dtype=complex)
    total = 0
    for rec in ds.records:
        snaps = block_snapshots(rec, layout)
        acc += snaps.sum(axis=0)
        total += snaps.shape[0]
    avg = acc / total
    tensor = psi.amps.reshape(4, 4)
    rho0 = tensor @ tensor.conj().T
    rho1 = tensor.T @ tensor.conj()
    assert np.max(np.abs(avg[0] - rho0)) < 0.05
    assert np.max(np.abs(avg[1] - rho1)) < 0.05


def test_kernel_single_record_self_value():
    layout = BlockLayout(2, 1)
    ds = acquire(zero_state(2), EnsembleSpec("clifford_full", layout), 1, 1, seed=7)
    tau, gamma = 0.7, 0.3
    got = shadow_kernel(ds, ds, tau, gamma)
    # single record, k=1: inner block trace Tr(S^2) = 5 for both blocks
    assert got == pytest.approx(np.exp(tau * np.exp(gamma * 5.0)))
    # tau = 0 collapses to 1
    assert shadow_kernel(ds, ds, 0.0, gamma) == pytest.approx(1.0)


def test_kernel_symmetry_and_positivity():
    rng = np.random.default_rng(2)
    layout = BlockLayout(4, 2)
    spec = EnsembleSpec("clifford_full", layout)
    datasets = [
        acquire(random_circuit_state(4, 4, np.random.default_rng(i)), spec, 6, 2, seed=10 + i)
        for i in range(4)
    ]
    gram = kernel_matrix(datasets, 1.0, 0.25, exclude_self_pairs=False)
    assert np.allclose(gram, gram.T, atol=1e-12)
    assert np.all(gram > 0)
    for a in range(4):
        for b in range(4):
            assert gram[a, b] == pytest.approx(
                shadow_kernel(datasets[a], datasets[b], 1.0, 0.25), rel=1e-12
            )
    # self-pair exclusion deflates only the diagonal
    gram_ex = kernel_matrix(datasets, 1.0, 0.25)
    off = ~np.eye(4, dtype=bool)
    assert np.allclose(gram_ex[off], gram[off])
    assert np.all(gram_ex.diagonal() < gram.diagonal())


def test_kernel_s_avg_variant():
    layout = BlockLayout(2, 1)
    spec = EnsembleSpec("clifford_full", layout)
    ds_a = acquire(bell_pairs_state(2), spec, 5, 4, seed=20)
    ds_b = acquire(bell_pairs_state(2), spec, 5, 4, seed=21)
    val = shadow_kernel(ds_a, ds_b, 1.0, 0.5, s_avg=True)
    assert val > 0
    assert shadow_kernel(ds_a, ds_b, 1.0, 0.5, s_avg=True) == pytest.approx(val)


def test_kernel_pca_basics():
    ones = np.ones((5, 5))
    res = kernel_pca(ones, components=3)
    assert np.allclose(res.eigenvalues, 0.0, atol=1e-10)

    # two well-separated synthetic clusters split by PC1 sign
    block = np.block(
        [[np.full((3, 3), 5.0), np.full((3, 4), 0.5)], [np.full((4, 3), 0.5), np.full((4, 4), 5.0)]]
    )
    res2 = kernel_pca(block, components=2)
    signs = np.sign(res2.projections[:, 0])
    assert len(set(signs[:3])) == 1 and len(set(signs[3:])) == 1
    assert signs[0] != signs[3]

    with pytest.raises(ValueError):
        kernel_pca(np.arange(6.0).reshape(2, 3))
    with pytest.raises(ValueError):
        kernel_pca(np.array([[1.0, 2.0], [0.5, 1.0]]))


def test_kernel_pca_trace_identity_and_shift_invariance():
    rng = np.random.default_rng(3)
    g = rng.normal(size=(6, 6))
    gram = g @ g.T
    res = kernel_pca(gram, components=6)
    m = gram.shape[0]
    j = np.eye(m) - np.ones((m, m)) / m
    centered = j @ gram @ j
    assert res.eigenvalues.sum() == pytest.approx(np.trace(centered), abs=1e-8)
    # orthogonality of projections across components
    inner = res.projections.T @ res.projections
    assert np.allclose(inner, np.diag(np.diag(inner)), atol=1e-8)
    # constant shifts are removed by double centering
    res_shift = kernel_pca(gram + 7.3, components=6)
    assert np.allclose(np.abs(res_shift.projections), np.abs(res.projections), atol=1e-8)


def test_em_kernel_params_identity():
    # alpha = 1 is the identity on (gamma, tau)
    out = em_kernel_params(0.25, 1.0, 1.0, 2)
    assert out["gamma"] == pytest.approx(0.25)
    assert out["tau"] == pytest.approx(1.0)
    assert out["beta"] == pytest.approx(0.0, abs=1e-12)


def test_em_kernel_operator_identity():
    # Tr(Mn^-1(A) Mn^-1(B)) - alpha^2 Tr(M^-1(A) M^-1(B)) == beta on trace-one inputs
    rng = np.random.default_rng(4)
    for k in (1, 2):
        dim = 1 << k
        for alpha in (1.1, 1.4):
            beta = em_kernel_params(1.0, 1.0, alpha, k)["beta"]
            c = (alpha * (dim + 1) - 1.0) / dim
            for _ in range(100):
                a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
                a = (a + a.conj().T) / 2
                a = a / np.trace(a).real
                b = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
                b = (b + b.conj().T) / 2
                b = b / np.trace(b).real
                noisy = lambda x: alpha * (dim + 1) * x - c * np.eye(dim)
                lhs = np.trace(noisy(a) @ noisy(b)).real
                clean = np.trace(
                    shadow_channel_inverse(a, k) @ shadow_channel_inverse(b, k)
                ).real
                assert abs(lhs - alpha**2 * clean - beta) < 1e-10


def test_fit_tanh_recovers_parameters():
    w = np.linspace(0.2, 2.0, 25)
    truth = {"a": 0.9, "b": 0.17, "c": 0.05, "w0": 1.03}
    y = truth["a"] * np.tanh((w - truth["w0"]) / truth["b"]) + truth["c"]
    fit = fit_tanh(w, y)
    for key in ("a", "b", "c", "w0"):
        assert fit[key] == pytest.approx(truth[key], abs=1e-5)
    assert fit["residual"] < 1e-6
    assert fit["slope"] == pytest.approx(truth["a"] / truth["b"], rel=1e-4)


def test_default_gamma():
    assert default_gamma(1) == 1.0
    assert default_gamma(2) == 0.25


def test_phase_scan_small_noiseless():
    w_grid = np.linspace(0.2, 2.0, 10)
    layout = BlockLayout(6, 2)
    res = phase_scan(w_grid, 1.0, 6, 20, layout, "haar_dense", seed=42, n_s=60)
    assert isinstance(res, PhaseScanResult)
    assert np.sign(res.pc1[0]) != np.sign(res.pc1[-1])
    assert 0.2 <= res.w0 <= 2.0
    assert res.fit["slope"] > 0
    with pytest.raises(ValueError):
        phase_scan(w_grid, 1.0, 5, 10, BlockLayout(5, 1), "clifford_full", seed=1)
