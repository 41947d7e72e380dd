"""Structured compressive channel estimation for hybrid mmWave arrays."""

__version__ = "0.1.0"

from .channel import (
    AngularChannelSet,
    DftPair,
    LinkBudgetParams,
    MultipathChannel,
    PathComponent,
    SystemConfig,
    aggregate_sparse_vector,
    angular_channel_set,
    angular_transform,
    dft_pair,
    draw_multipath,
    delay_to_frequency,
    inverse_angular_transform,
    path_loss_db,
    steering_vector,
)
from .pilots import (
    MeasurementSet,
    PilotEnsemble,
    build_measurement_set,
    calibrate_noise_variance,
    draw_ensemble,
    measurement_operator,
    measurement_operators,
    pilot_subcarrier_indices,
    slot_measurement,
    stack_measurements,
    synthesize_received,
)
from .recovery import (
    P_TH_NOISELESS,
    EstimationResult,
    adaptive_omp,
    nmse_db,
    oracle_ls,
    p_th_for_snr,
    ssamp,
    support_metrics,
)
from .simulate import (
    ResultTable,
    TrialRecord,
    ber_experiment,
    run_trial,
    sweep,
)
from .theory import (
    GmmvInstance,
    UniquenessCertificate,
    bridge_matrices,
    draw_gmmv_instance,
    exhaustive_l0_solve,
    min_time_slots,
    orthogonal_pilot_overhead,
    spark,
    uniqueness_check,
    unique_minimal_support,
)
