import numpy as np
import pytest
from scipy.stats import chi2

from blockshadow.clifford import (
    BlockUnitary,
    CliffordTableau,
    EnsembleSpec,
    LayeredBlockUnitary,
    build_mub_ensemble,
    build_stabilizer_basis_ensemble,
    clifford_group_order,
    enumerate_clifford,
    indicator,
    indicator_block,
    sample_clifford,
    sample_dense_haar,
    snapshot_weight,
)
from blockshadow.pauli import BlockLayout, PauliString, commutes

# dense single-qubit gates for oracle tableaux
_H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
_S = np.diag([1, 1j])


def tableau_from_unitary_1q(u):
    """Oracle: read the conjugation images off a dense 2x2 Clifford."""
    imgs = []
    for mat in (np.array([[0, 1], [1, 0]]), np.diag([1, -1])):
        out = u @ mat @ u.conj().T
        for text in ("X", "Y", "Z"):
            ref = PauliString.from_text(text).to_matrix()
            if np.allclose(out, ref):
                imgs.append(PauliString.from_text(text))
                break
            if np.allclose(out, -ref):
                imgs.append(PauliString.from_text("-" + text))
                break
    return CliffordTableau(1, [imgs[0]], [imgs[1]])


def test_enumeration_counts():
    assert len(enumerate_clifford(1)) == 24 == clifford_group_order(1)
    assert len(enumerate_clifford(2)) == 11520 == clifford_group_order(2)
    with pytest.raises(ValueError):
        enumerate_clifford(3)


def test_enumeration_distinct_and_valid():
    group = enumerate_clifford(1)
    assert len(set(group)) == 24
    assert all(t.is_valid() for t in group)
    two = enumerate_clifford(2)
    assert len(set(two)) == 11520
    rng = np.random.default_rng(0)
    for idx in rng.integers(0, 11520, size=50):
        assert two[idx].is_valid()


def test_identity_tableau_is_valid_sample():
    ident = CliffordTableau.identity(2)
    assert ident.is_valid()
    assert ident in set(enumerate_clifford(2))


def test_hadamard_and_phase_conjugation():
    h = tableau_from_unitary_1q(_H)
    assert h.conjugate(PauliString.from_text("Z")) == PauliString.from_text("X")
    assert h.conjugate(PauliString.from_text("X")) == PauliString.from_text("Z")
    s = tableau_from_unitary_1q(_S)
    assert s.conjugate(PauliString.from_text("X")) == PauliString.from_text("Y")
    ident = CliffordTableau.identity(1)
    for text in ("X", "Y", "Z", "-Y"):
        p = PauliString.from_text(text)
        assert ident.conjugate(p) == p


def test_conjugation_matches_dense_oracle():
    rng = np.random.default_rng(42)
    for k in (1, 2):
        group = enumerate_clifford(k)
        for _ in range(25):
            t = group[rng.integers(0, len(group))]
            u = t.to_unitary()
            x = int(rng.integers(0, 1 << k))
            z = int(rng.integers(0, 1 << k))
            p = PauliString(k, x, z, 0)
            got = t.conjugate(p)
            assert np.allclose(got.to_matrix(), u @ p.to_matrix() @ u.conj().T, atol=1e-10)


def test_group_action_composition():
    rng = np.random.default_rng(1)
    group = enumerate_clifford(2)
    for _ in range(20):
        a = group[rng.integers(0, len(group))]
        b = group[rng.integers(0, len(group))]
        ab = a.compose(b)
        p = PauliString(2, int(rng.integers(0, 4)), int(rng.integers(0, 4)), 0)
        assert ab.conjugate(p) == a.conjugate(b.conjugate(p))


def test_inverse_round_trip():
    rng = np.random.default_rng(2)
    group = enumerate_clifford(2)
    ident = CliffordTableau.identity(2)
    for _ in range(10):
        t = group[rng.integers(0, len(group))]
        assert t.compose(t.inverse()) == ident
        assert t.inverse().compose(t) == ident


def test_to_unitary_is_unitary():
    rng = np.random.default_rng(3)
    group = enumerate_clifford(2)
    for _ in range(10):
        u = group[rng.integers(0, len(group))].to_unitary()
        assert np.max(np.abs(u.conj().T @ u - np.eye(4))) < 1e-10


def test_conjugation_preserves_commutation():
    rng = np.random.default_rng(4)
    for k in (1, 2):
        group = enumerate_clifford(k)
        idx = rng.integers(0, len(group), size=40 if k == 2 else len(group))
        for i in idx:
            t = group[i]
            for _ in range(10):
                p = PauliString(k, int(rng.integers(0, 1 << k)), int(rng.integers(0, 1 << k)), 0)
                q = PauliString(k, int(rng.integers(0, 1 << k)), int(rng.integers(0, 1 << k)), 0)
                assert commutes(p, q) == commutes(t.conjugate(p), t.conjugate(q))


def test_channel_eigenvalue_identity_exact():
    # (1/|Cl(k)|) sum_U 1{U P U^dag z-type} == 1/(2^k+1) exactly, as integers.
    for k in (1, 2):
        group = enumerate_clifford(k)
        for x in range(1 << k):
            for z in range(1 << k):
                if x == 0 and z == 0:
                    continue
                p = PauliString(k, x, z, 0)
                count = sum(indicator_block(t, p) for t in group)
                assert count * (2**k + 1) == len(group)


def test_sampler_distribution_k1_chi_squared():
    rng = np.random.default_rng(2024)
    group = enumerate_clifford(1)
    index = {t: i for i, t in enumerate(group)}
    counts = np.zeros(24)
    nsamp = 100_000
    for _ in range(nsamp):
        counts[index[sample_clifford(1, rng)]] += 1
    expected = nsamp / 24
    stat = np.sum((counts - expected) ** 2 / expected)
    assert chi2.sf(stat, 23) > 0.001


def test_sampler_conjugates_z_uniformly():
    rng = np.random.default_rng(7)
    z = PauliString.from_text("Z")
    hits = {"X": 0, "Y": 0, "Z": 0}
    nsamp = 30_000
    for _ in range(nsamp):
        out = sample_clifford(1, rng).conjugate(z)
        hits[PauliString(1, out.x, out.z, 0).to_text()] += 1
    for axis in "XYZ":
        # binomial 5 sigma around 1/3
        sigma = np.sqrt(nsamp * (1 / 3) * (2 / 3))
        assert abs(hits[axis] - nsamp / 3) < 5 * sigma


def test_sampler_distribution_k2_coset_chi_squared():
    # X1-image (signed) partitions Cl(2) into 30 equal cosets.
    rng = np.random.default_rng(11)
    counts: dict = {}
    nsamp = 30_000
    for _ in range(nsamp):
        t = sample_clifford(2, rng)
        img = t.x_imgs[0]
        counts[(img.x, img.z, img.phase)] = counts.get((img.x, img.z, img.phase), 0) + 1
    assert len(counts) == 30
    expected = nsamp / 30
    stat = sum((c - expected) ** 2 / expected for c in counts.values())
    assert chi2.sf(stat, 29) > 0.001


def test_indicator_basic():
    layout = BlockLayout(1, 1)
    ident = LayeredBlockUnitary.identity(layout)
    assert indicator(ident, PauliString.from_text("Z")) == 1
    assert indicator(ident, PauliString.from_text("X")) == 0


def test_indicator_average_over_cl1():
    group = enumerate_clifford(1)
    p = PauliString.from_text("X")
    count = sum(indicator_block(t, p) for t in group)
    assert count / len(group) == pytest.approx(1 / 3)


def test_snapshot_weight_basic():
    layout = BlockLayout(1, 1)
    ident = LayeredBlockUnitary.identity(layout)
    z = PauliString.from_text("Z")
    x = PauliString.from_text("X")
    assert snapshot_weight(ident, z, 0b0) == 1
    assert snapshot_weight(ident, z, 0b1) == -1
    assert snapshot_weight(ident, x, 0b0) == 0
    assert snapshot_weight(ident, x, 0b1) == 0


def test_snapshot_weight_matches_dense_oracle():
    rng = np.random.default_rng(5)
    layout = BlockLayout(4, 2)
    group = enumerate_clifford(2)
    for _ in range(30):
        blocks = [BlockUnitary(2, tableau=group[rng.integers(0, len(group))]) for _ in range(2)]
        u = LayeredBlockUnitary(layout, blocks)
        p = PauliString(4, int(rng.integers(0, 16)), int(rng.integers(0, 16)), 0)
        b = int(rng.integers(0, 16))
        dense = np.kron(blocks[0].dense(), blocks[1].dense())
        val = (dense @ p.to_matrix() @ dense.conj().T)[b, b]
        assert abs(snapshot_weight(u, p, b) - val) < 1e-10


def test_mub_counts_and_coverage():
    for k in (1, 2):
        members = build_mub_ensemble(k)
        assert len(members) == 2**k + 1
        for x in range(1 << k):
            for z in range(1 << k):
                if x == 0 and z == 0:
                    continue
                p = PauliString(k, x, z, 0)
                cover = sum(indicator_block(t, p) for t in members)
                assert cover == 1


def test_mub_channel_equals_full_clifford_twirl():
    # Averaged measurement twirl over the MUB set equals the Cl(k) average.
    rng = np.random.default_rng(6)
    for k in (1, 2):
        dim = 2**k
        mub = build_mub_ensemble(k)
        full = enumerate_clifford(k)

        def twirl(members, a):
            out = np.zeros((dim, dim), dtype=complex)
            for t in members:
                u = t.to_unitary()
                rot = u @ a @ u.conj().T
                for b in range(dim):
                    proj = u.conj().T[:, b]
                    out += np.outer(proj, proj.conj()) * rot[b, b]
            return out / len(members)

        for _ in range(4 if k == 2 else 8):
            g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            a = (g + g.conj().T) / 2
            assert np.max(np.abs(twirl(mub, a) - twirl(full, a))) < 1e-12


def test_stabilizer_basis_counts():
    assert len(build_stabilizer_basis_ensemble(1)) == 3
    members = build_stabilizer_basis_ensemble(2)
    assert len(members) == 15
    assert len(set(members)) == 15
    with pytest.raises(ValueError):
        build_stabilizer_basis_ensemble(3)


def test_stabilizer_basis_f_table_matches_cl2():
    # Joint z-type probabilities over the 15-member set reproduce the Cl(2)
    # closed-form f-table exactly (checked as exact rationals).
    from fractions import Fraction

    members = build_stabilizer_basis_ensemble(2)
    full = enumerate_clifford(2)
    paulis = [PauliString(2, x, z, 0) for x in range(4) for z in range(4)]
    ind_small = {p: [indicator_block(t, p) for t in members] for p in paulis}
    ind_full = {p: [indicator_block(t, p) for t in full] for p in paulis}
    for p in paulis:
        for q in paulis:
            pr_small = Fraction(
                sum(a & b for a, b in zip(ind_small[p], ind_small[q])), len(members)
            )
            pr_full = Fraction(sum(a & b for a, b in zip(ind_full[p], ind_full[q])), len(full))
            assert pr_small == pr_full


def test_dense_haar_unitarity_and_first_moment():
    rng = np.random.default_rng(8)
    for k in (1, 2):
        b = sample_dense_haar(k, rng)
        dim = 2**k
        assert np.max(np.abs(b.dense().conj().T @ b.dense() - np.eye(dim))) < 1e-10
    # E|<0|U|0>|^2 = 1/2 for k=1
    vals = [abs(sample_dense_haar(1, rng).dense()[0, 0]) ** 2 for _ in range(20000)]
    mean = np.mean(vals)
    stderr = np.std(vals) / np.sqrt(len(vals))
    assert abs(mean - 0.5) < 5 * stderr


def test_dense_haar_twirl_matches_clifford_channel():
    # MC second-moment check: Haar(2^k) block twirl reproduces the Cl(k)
    # measurement channel on a fixed state (2-design equivalence).
    rng = np.random.default_rng(9)
    k, dim = 1, 2
    psi = np.array([0.6, 0.8j])
    rho = np.outer(psi, psi.conj())
    acc = np.zeros((dim, dim), dtype=complex)
    nsamp = 100_000
    for _ in range(nsamp):
        u = sample_dense_haar(k, rng).dense()
        rot = u @ rho @ u.conj().T
        for b in range(dim):
            proj = u.conj().T[:, b]
            acc += np.outer(proj, proj.conj()) * rot[b, b].real
    got = acc / nsamp
    want = (rho + np.trace(rho) * np.eye(dim)) / (dim + 1)
    assert np.max(np.abs(got - want)) < 3 * 1.5 / np.sqrt(nsamp)


def test_tableau_serialization_round_trip():
    rng = np.random.default_rng(10)
    group = enumerate_clifford(2)
    for _ in range(10):
        t = group[rng.integers(0, len(group))]
        assert CliffordTableau.from_json(t.to_json()) == t
    layout = BlockLayout(4, 2)
    u = LayeredBlockUnitary(
        layout, [BlockUnitary(2, tableau=group[3]), BlockUnitary(2, tableau=group[77])]
    )
    again = LayeredBlockUnitary.from_json(u.to_json())
    assert again.same_as(u)
    dense_u = LayeredBlockUnitary(layout, [sample_dense_haar(2, rng) for _ in range(2)])
    again = LayeredBlockUnitary.from_json(dense_u.to_json())
    assert again.same_as(dense_u)


def test_ensemble_spec():
    layout = BlockLayout(4, 2)
    rng = np.random.default_rng(12)
    for kind in ("clifford_full", "mub", "stabilizer_basis", "haar_dense"):
        spec = EnsembleSpec(kind, layout)
        u = spec.sample(rng)
        assert len(u.blocks) == 2
    with pytest.raises(ValueError):
        EnsembleSpec("bogus", layout)
    assert len(EnsembleSpec("mub", layout).block_candidates()) == 5
    assert len(EnsembleSpec("stabilizer_basis", layout).block_candidates()) == 15
