"""Link-level simulator for uplink cell-free massive MIMO OFDM under
oscillator phase noise.

The package covers the whole chain: scenario/geometry configuration, Wiener
phase-noise traces and their second-order statistics, block-fading channels,
exact and approximate OFDM signal synthesis, LMMSE/neural channel and
common-phase-error estimators, MMSE combining with use-and-then-forget
spectral-efficiency accounting, and a seeded Monte-Carlo experiment harness
with a CLI front end.
"""

from .config import (
    ConfigError,
    OfdmGrid,
    CoherenceGeometry,
    PilotPlan,
    ScenarioConfig,
    build_pilot_plan,
    desk_scenario,
    scenario1,
    scenario2,
    scenario_hash,
    read_config,
    write_config,
)
from .phase_noise import (
    increment_variance,
    gen_pn_trace,
    gen_pn_block,
    PnBlock,
    PnStatistics,
    phase_drift_dft,
    mean_phase_drift,
    drift_corr_same,
    drift_corr_cross,
    pn_autocorr,
    pn_crosscorr,
)
from .channel import LargeScale, gen_large_scale, gen_block_channels, time_domain_taps
from .ofdm import (
    TxGrid,
    RxFrame,
    gen_tx_grid,
    synthesize_time,
    synthesize_freq,
    synthesize_mismatched,
    representative_subcarriers,
    stack_pilots,
)
from .estimators import (
    NumericalError,
    ChannelEstimate,
    CpeEstimate,
    ESTIMATOR_NAMES,
    hermitian_solve,
    ici_cov_local,
    build_joint_filters,
    lmmse_joint_distributed,
    build_single_carrier_filters,
    lmmse_single_carrier,
    mmse_pn_unaware,
    cpe_cov_global,
    cpe_centralized_constrained,
    lmmse_channel_given_cpe,
    alternating_centralized,
    effective_estimate,
)
from .dl import (
    DlHyperparams,
    DlParams,
    dl_forward,
    dl_loss_and_grads,
    dl_train,
    gen_training_set,
    save_params,
    load_params,
)
from .receiver import (
    DccAssignment,
    CombinerWeights,
    ExpectationBank,
    SeReport,
    mmse_combiner,
    demodulate,
    effective_true,
    true_cpe,
    ici_power_lambda,
    trial_terms,
    sinr_uatf,
    se_per_ue,
    complexity_report,
    fronthaul_report,
)
from .harness import (
    ExperimentGrid,
    estimate_effective,
    run_experiment,
    mse_experiment,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
