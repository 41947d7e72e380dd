"""Random-phase pilot ensembles and the stacked angular measurement operators.

During training slot t every BS beams one pilot vector per pilot subcarrier
through its analog/digital chain while the user combines with its own two
stage chain.  All pilot weights are unit-modulus with i.i.d. uniform phases;
analog (RF) stages are frozen across subcarriers within a slot while the
baseband stages vary per subcarrier.  Rewriting the combined slot output in
the angular basis turns the whole slot into a short fat sensing matrix acting
on the aggregate sparse vector, and stacking slots gives the G N_chain-row
operator the recovery stage inverts.
"""

from dataclasses import dataclass

import numpy as np

from .channel import DftPair, SystemConfig


@dataclass(frozen=True)
class PilotEnsemble:
    """Unit-modulus training weights for all slots, subcarriers and BSs.

    Shapes:
      rf_combiner   (G, N_US, N_chain_US)         shared across subcarriers
      bb_combiner   (G, P, N_chain_US, N_chain_US)
      rf_precoder   (G, M, N_BS, N_chain_BS)      shared across subcarriers
      eff_training  (G, P, M, N_chain_BS)         baseband-precoded pilot
    """

    rf_combiner: np.ndarray
    bb_combiner: np.ndarray
    rf_precoder: np.ndarray
    eff_training: np.ndarray

    @property
    def n_slots(self) -> int:
        return self.rf_combiner.shape[0]

    @property
    def n_pilot_subcarriers(self) -> int:
        return self.bb_combiner.shape[1]

    @property
    def pilot_scale(self) -> float:
        """Transmit normalisation 1/sqrt(N_BS * N_chain_BS)."""
        n_bs_ant = self.rf_precoder.shape[2]
        n_bs_chain = self.rf_precoder.shape[3]
        return 1.0 / np.sqrt(n_bs_ant * n_bs_chain)


def _unit_phases(rng, shape) -> np.ndarray:
    return np.exp(2j * np.pi * rng.random(shape))


def draw_ensemble(config: SystemConfig, seed: int) -> PilotEnsemble:
    """Draw every training weight with i.i.d. U[0, 2pi) phases."""
    rng = np.random.default_rng(seed)
    g, p = config.n_slots, config.n_pilot_subcarriers
    return PilotEnsemble(
        rf_combiner=_unit_phases(rng, (g, config.n_ant_user, config.n_chain_user)),
        bb_combiner=_unit_phases(rng, (g, p, config.n_chain_user, config.n_chain_user)),
        rf_precoder=_unit_phases(rng, (g, config.n_bs, config.n_ant_bs, config.n_chain_bs)),
        eff_training=_unit_phases(rng, (g, p, config.n_bs, config.n_chain_bs)),
    )


def combiner_matrix(ensemble: PilotEnsemble, slot: int, pilot: int) -> np.ndarray:
    """Two-stage user combiner Z = Z_RF Z_BB for one slot and subcarrier."""
    return ensemble.rf_combiner[slot] @ ensemble.bb_combiner[slot, pilot]


def pilot_vector(ensemble: PilotEnsemble, slot: int, pilot: int, bs: int) -> np.ndarray:
    """Per-BS transmitted pilot f = F_RF s, scaled to unit transmit power."""
    return (
        ensemble.rf_precoder[slot, bs] @ ensemble.eff_training[slot, pilot, bs]
    ) * ensemble.pilot_scale


def slot_measurement(
    ensemble: PilotEnsemble, dft: DftPair, slot: int, pilot: int
) -> np.ndarray:
    """Angular sensing matrix of one slot for one pilot subcarrier.

    Phi = (A_TX^H f per BS, stacked)^T kron (Z^H A_RX), with shape
    (N_chain_US, M * N_BS * N_US).  Column blocks follow the aggregate
    vector layout of channel.aggregate_sparse_vector.
    """
    n_bs = ensemble.rf_precoder.shape[1]
    z = combiner_matrix(ensemble, slot, pilot)
    left = z.conj().T @ dft.rx  # (N_chain_US, N_US)
    beams = [
        dft.tx.conj().T @ pilot_vector(ensemble, slot, pilot, m) for m in range(n_bs)
    ]
    right = np.concatenate(beams)  # (M * N_BS,)
    return np.kron(right[None, :], left)


def stack_measurements(slot_operators) -> np.ndarray:
    """Stack per-slot operators row-wise in slot order t = 1..G."""
    ops = list(slot_operators)
    if not ops:
        raise ValueError("need at least one slot operator")
    width = ops[0].shape[1]
    for i, op in enumerate(ops):
        if op.shape[1] != width:
            raise ValueError(
                f"slot operator {i} has {op.shape[1]} columns, expected {width}"
            )
    return np.vstack(ops)


def measurement_operator(ensemble: PilotEnsemble, dft: DftPair, pilot: int) -> np.ndarray:
    """All G slots stacked for one pilot subcarrier."""
    return stack_measurements(
        slot_measurement(ensemble, dft, t, pilot) for t in range(ensemble.n_slots)
    )


def measurement_operators(ensemble: PilotEnsemble, dft: DftPair) -> np.ndarray:
    """Stacked operators for every pilot subcarrier; shape (P, rows, dim)."""
    return np.array(
        [
            measurement_operator(ensemble, dft, p)
            for p in range(ensemble.n_pilot_subcarriers)
        ]
    )


def pilot_subcarrier_indices(config: SystemConfig) -> np.ndarray:
    """Equi-spaced 1-based pilot positions; requires P to divide N."""
    n, p = config.n_subcarriers, config.n_pilot_subcarriers
    if n % p != 0:
        raise ValueError(
            f"n_pilot_subcarriers ({p}) must divide n_subcarriers ({n})"
        )
    return 1 + (n // p) * np.arange(p)


def calibrate_noise_variance(operators, vectors, snr_db: float) -> float:
    """Per-entry complex noise variance matching a target pilot SNR.

    SNR is the realised signal energy summed over subcarriers divided by
    rows * P * sigma^2, so sigma^2 = sum_p ||Phi_p h_p||^2 / (rows * P *
    10^(SNR/10)).  Raises when every signal is zero (SNR undefined).
    """
    ops = np.asarray(operators)
    vecs = np.asarray(vectors)
    energy = 0.0
    for p in range(ops.shape[0]):
        energy += float(np.sum(np.abs(ops[p] @ vecs[p]) ** 2))
    if energy == 0.0:
        raise ValueError("all-zero signals: SNR is undefined")
    rows = ops.shape[1]
    n_pilots = ops.shape[0]
    return energy / (rows * n_pilots * 10.0 ** (snr_db / 10.0))


def synthesize_received(operators, vectors, noise_variance: float, seed: int) -> np.ndarray:
    """Noisy received pilots r_p = Phi_p h_p + CN(0, sigma^2 I); shape (P, rows)."""
    if noise_variance < 0:
        raise ValueError("noise_variance must be non-negative")
    ops = np.asarray(operators)
    vecs = np.asarray(vectors)
    rng = np.random.default_rng(seed)
    out = np.empty((ops.shape[0], ops.shape[1]), dtype=np.complex128)
    std = np.sqrt(noise_variance / 2.0)
    for p in range(ops.shape[0]):
        noise = std * (
            rng.standard_normal(ops.shape[1]) + 1j * rng.standard_normal(ops.shape[1])
        )
        out[p] = ops[p] @ vecs[p] + noise
    return out


@dataclass(frozen=True)
class MeasurementSet:
    """Everything the recovery stage needs for one training run."""

    operators: np.ndarray        # (P, rows, dim)
    received: np.ndarray         # (P, rows)
    noise_variance: float
    pilot_indices: np.ndarray


def build_measurement_set(
    ensemble: PilotEnsemble,
    dft: DftPair,
    config: SystemConfig,
    vectors,
    snr_db,
    noise_seed: int,
) -> MeasurementSet:
    """Stack operators, calibrate noise to snr_db (None = noiseless), receive."""
    ops = measurement_operators(ensemble, dft)
    sigma2 = 0.0 if snr_db is None else calibrate_noise_variance(ops, vectors, snr_db)
    received = synthesize_received(ops, vectors, sigma2, noise_seed)
    return MeasurementSet(
        operators=ops,
        received=received,
        noise_variance=sigma2,
        pilot_indices=pilot_subcarrier_indices(config),
    )
