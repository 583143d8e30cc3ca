"""Block-structured randomized measurement toolbox.

Shadow-data acquisition on exactly simulable states, Pauli/fidelity/purity/
inner-product estimation, common-randomized-measurement corrections, spectral
form factors, closed-form variance analytics, derandomized measurement
planning, Pauli-noise calibration and mitigation, and shadow-kernel PCA.
"""

from .pauli import (
    BlockLayout,
    ObservableSum,
    PauliString,
    block_weight,
    build_cluster_heisenberg,
    cluster_heisenberg_parts,
    commutes,
    cross_terms,
    multiply,
    square_observable,
)
from .clifford import (
    BlockUnitary,
    CliffordTableau,
    EnsembleSpec,
    LayeredBlockUnitary,
    build_mub_ensemble,
    build_stabilizer_basis_ensemble,
    enumerate_clifford,
    indicator,
    sample_clifford,
    sample_dense_haar,
    snapshot_weight,
)
from .states import (
    StateVector,
    apply_block_unitary,
    bell_pairs_state,
    evolve_exact,
    expectation,
    expectation_pauli,
    ghz_state,
    ground_state_exact,
    purity_exact,
    random_circuit_state,
    sample_bitstrings,
    ssh_ground_state,
    zero_state,
)
from .shadows import (
    EstimateResult,
    ShadowDataset,
    ShadowRecord,
    acquire,
    crm_estimate,
    estimate_fidelity,
    estimate_inner_product,
    estimate_observable,
    estimate_pauli,
    estimate_purity,
    sff_estimate,
    shadow_channel_forward,
    shadow_channel_inverse,
)
from .analytics import (
    compute_V123,
    f_pq,
    fit_V_from_std,
    m_eigenvalue,
    shadow_norm_pauli,
    useful_sums,
    variance_crm,
    variance_fidelity,
    variance_pauli_multishot,
    variance_purity,
)
from .derand import DerandConfig, MeasurementPlan, conf, derandomize, expected_conf
from .noise import (
    CalibrationReport,
    NoiseModel,
    PauliChannelSpec,
    calibrate_alpha,
    channel2_eigenvalue,
    mitigated_estimate,
    noisy_m,
    simulate_noisy_trajectory,
)
from .ml import (
    PhaseScanResult,
    block_snapshots,
    em_kernel_params,
    kernel_matrix,
    kernel_pca,
    phase_scan,
    shadow_kernel,
)

__version__ = "0.1.0"
