"""Monte-Carlo harness: estimation trials, parameter sweeps, and a BER study.

A trial draws one channel and one pilot ensemble, synthesizes noisy received
pilots at the configured SNR, and runs the three estimators on identical
data.  Sweeps repeat trials over a grid of slot counts or SNRs with paired
seeds so curves are directly comparable.  The BER experiment reuses the
estimation pipeline to feed a simplified two-stream downlink and measures how
CSI quality propagates into hard-decision errors.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from itertools import repeat

import numpy as np

from .channel import (
    SystemConfig,
    angular_channel_set,
    dft_pair,
    draw_multipath,
    grid_steering_vector,
    inverse_angular_transform,
)
from .pilots import (
    calibrate_noise_variance,
    draw_ensemble,
    measurement_operators,
    pilot_subcarrier_indices,
    synthesize_received,
)
from .recovery import (
    adaptive_omp,
    nmse_db,
    oracle_ls,
    p_th_for_snr,
    ssamp,
)

ESTIMATORS = ("ssamp", "adaptive_omp", "oracle_ls")
CSI_SOURCES = ("perfect", "ssamp", "adaptive_omp")

MSE_COLUMNS = ("sweep_var", "value", "estimator", "nmse_db", "support_rate", "trials", "stderr")
BER_COLUMNS = ("snr_db", "csi_source", "ber", "symbols")

# Adaptive-OMP stop rule: residual energy down to sigma^2 * rows * (1 + margin).
OMP_THRESHOLD_MARGIN = 0.1

_SWEEP_FIELDS = {
    "n_slots": "n_slots",
    "slots": "n_slots",
    "G": "n_slots",
    "g": "n_slots",
    "snr_db": "snr_db",
    "snr": "snr_db",
}


@dataclass(frozen=True)
class EstimatorMetrics:
    nmse_db: float
    exact_support_match: bool
    iterations: int
    wall_time_s: float


@dataclass(frozen=True)
class TrialRecord:
    """One end-to-end trial: seed, config snapshot, per-estimator metrics."""

    seed: int
    config: SystemConfig
    true_sparsity: int
    metrics: dict


@dataclass(frozen=True)
class ResultTable:
    """Column-named rows; the CSV schemas written by the CLI live here."""

    columns: tuple
    rows: tuple

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(self.columns)
            writer.writerows(self.rows)

    def to_records(self):
        return [dict(zip(self.columns, row)) for row in self.rows]


def _trial_seeds(seed: int):
    state = np.random.SeedSequence(seed).generate_state(3)
    return int(state[0]), int(state[1]), int(state[2])


def _synthesize(config: SystemConfig, chan_seed: int, ens_seed: int, noise_seed: int):
    """Channel + pilots + noisy measurements for one realisation."""
    chan = draw_multipath(config, chan_seed)
    dft = dft_pair(config)
    indices = pilot_subcarrier_indices(config)
    aset = angular_channel_set(chan, config, dft, indices)
    ensemble = draw_ensemble(config, ens_seed)
    operators = measurement_operators(ensemble, dft)
    sigma2 = calibrate_noise_variance(operators, aset.vectors, config.snr_db)
    received = synthesize_received(operators, aset.vectors, sigma2, noise_seed)
    return chan, dft, aset, operators, received, sigma2


def _ssamp_gain_scaled(received, operators, config: SystemConfig, p_th: float):
    """Run ssamp with coefficients re-anchored at path-gain scale.

    On-grid angular coefficients carry a sqrt(N_US * N_BS) array factor; the
    p_th schedule is calibrated for unit-mean-power path gains, so the
    received pilots are scaled down before recovery and the estimates scaled
    back.  ssamp is exactly scale-equivariant apart from the p_th test, so
    this changes nothing but the threshold anchor.
    """
    scale = np.sqrt(config.n_ant_user * config.n_ant_bs)
    result = ssamp(np.asarray(received) / scale, operators, p_th)
    return replace(
        result,
        estimates=result.estimates * scale,
        final_residual_energy=result.final_residual_energy * scale**2,
    )


def _omp_threshold(sigma2: float, rows: int, received) -> float:
    threshold = sigma2 * rows * (1.0 + OMP_THRESHOLD_MARGIN)
    # Noiseless runs: keep the stop rule reachable under float rounding.
    floor = 1e-24 * float(np.mean(np.abs(received) ** 2)) * rows
    return max(threshold, floor, 1e-300)


def run_trial(config: SystemConfig, seed: int) -> TrialRecord:
    """One paired comparison of ssamp, adaptive OMP and oracle LS.

    All three see the same channel, pilots and noise.  Sub-seeds for the
    channel, the ensemble and the noise are derived deterministically from
    `seed`, so a record is reproducible bit for bit.  snr_db = inf in the
    config runs the trial noiseless.
    """
    chan_seed, ens_seed, noise_seed = _trial_seeds(seed)
    chan, dft, aset, operators, received, sigma2 = _synthesize(
        config, chan_seed, ens_seed, noise_seed
    )
    rows = operators.shape[1]
    true_set = set(aset.support.tolist())

    metrics = {}

    start = time.perf_counter()
    est = _ssamp_gain_scaled(received, operators, config, p_th_for_snr(config.snr_db))
    metrics["ssamp"] = EstimatorMetrics(
        nmse_db=nmse_db(est.estimates, aset.vectors),
        exact_support_match=set(est.support.tolist()) == true_set,
        iterations=est.iterations,
        wall_time_s=time.perf_counter() - start,
    )

    start = time.perf_counter()
    est = adaptive_omp(received, operators, _omp_threshold(sigma2, rows, received))
    metrics["adaptive_omp"] = EstimatorMetrics(
        nmse_db=nmse_db(est.estimates, aset.vectors),
        exact_support_match=set(est.support.tolist()) == true_set,
        iterations=est.iterations,
        wall_time_s=time.perf_counter() - start,
    )

    start = time.perf_counter()
    est = oracle_ls(received, operators, aset.support)
    metrics["oracle_ls"] = EstimatorMetrics(
        nmse_db=nmse_db(est.estimates, aset.vectors),
        exact_support_match=True,
        iterations=est.iterations,
        wall_time_s=time.perf_counter() - start,
    )

    return TrialRecord(
        seed=seed, config=config, true_sparsity=aset.sparsity, metrics=metrics
    )


def _aggregate(records, sweep_var, value) -> list:
    rows = []
    n_trials = len(records)
    for name in ESTIMATORS:
        lin = np.array([10.0 ** (rec.metrics[name].nmse_db / 10.0) for rec in records])
        matches = np.array(
            [rec.metrics[name].exact_support_match for rec in records], dtype=float
        )
        mean_lin = float(lin.mean())
        if mean_lin <= 0.0:
            mean_db, stderr_db = -300.0, 0.0
        else:
            mean_db = 10.0 * np.log10(mean_lin)
            if n_trials > 1:
                stderr_lin = float(lin.std(ddof=1)) / np.sqrt(n_trials)
                stderr_db = 10.0 / np.log(10.0) * stderr_lin / mean_lin
            else:
                stderr_db = 0.0
        rows.append(
            (sweep_var, value, name, mean_db, float(matches.mean()), n_trials, stderr_db)
        )
    return rows


def sweep(
    config: SystemConfig,
    variable: str,
    values,
    n_trials: int,
    base_seed: int,
    workers: int = 1,
) -> ResultTable:
    """Paired Monte-Carlo sweep over slot count or SNR.

    Trial t uses seed base_seed + t at every sweep value, so estimator and
    sweep-point comparisons are paired.  The per-trial NMSE ratios are
    averaged in the linear domain and reported in dB; stderr is the delta-
    method standard error of that mean.  workers > 1 runs trials in separate
    processes; aggregation order is fixed, so results match the serial run
    bit for bit.
    """
    field = _SWEEP_FIELDS.get(variable)
    if field is None:
        raise ValueError(
            f"unknown sweep variable {variable!r}; expected one of "
            f"{sorted(set(_SWEEP_FIELDS))}"
        )
    values = list(values)
    if not values:
        raise ValueError("values must be non-empty")
    if n_trials < 1:
        raise ValueError("n_trials must be positive")
    rows = []
    for value in values:
        cast = int(value) if field == "n_slots" else float(value)
        cfg = replace(config, **{field: cast})
        seeds = [base_seed + t for t in range(n_trials)]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                records = list(pool.map(run_trial, repeat(cfg), seeds, chunksize=8))
        else:
            records = [run_trial(cfg, s) for s in seeds]
        rows.extend(_aggregate(records, field, cast))
    return ResultTable(columns=MSE_COLUMNS, rows=tuple(rows))


# 16-QAM, Gray mapped: per axis bits (b0, b1) -> level index 2 b0 + (b0 xor b1),
# levels (-3, -1, 1, 3)/sqrt(10) so symbol energy is 1.
_QAM_LEVELS = np.array([-3.0, -1.0, 1.0, 3.0]) / np.sqrt(10.0)


def qam16_modulate(bits) -> np.ndarray:
    """Map bits (length divisible by 4) to Gray-coded unit-energy 16-QAM."""
    b = np.asarray(bits, dtype=int).reshape(-1, 4)
    i_idx = 2 * b[:, 0] + (b[:, 0] ^ b[:, 1])
    q_idx = 2 * b[:, 2] + (b[:, 2] ^ b[:, 3])
    return _QAM_LEVELS[i_idx] + 1j * _QAM_LEVELS[q_idx]


def qam16_hard_bits(symbols) -> np.ndarray:
    """Nearest-level hard decisions back to bits; inverse of qam16_modulate."""
    s = np.asarray(symbols).ravel()
    i_idx = np.argmin(np.abs(s.real[:, None] - _QAM_LEVELS[None, :]), axis=1)
    q_idx = np.argmin(np.abs(s.imag[:, None] - _QAM_LEVELS[None, :]), axis=1)
    out = np.empty((s.size, 4), dtype=int)
    out[:, 0] = i_idx >> 1
    out[:, 1] = out[:, 0] ^ (i_idx & 1)
    out[:, 2] = q_idx >> 1
    out[:, 3] = out[:, 2] ^ (q_idx & 1)
    return out.ravel()


def _los_beams(chan, config: SystemConfig):
    """Two strongest LOS paths (ties to the lower BS index) and their beams."""
    los = [(m, link[0]) for m, link in enumerate(chan.links)]
    los.sort(key=lambda item: (-abs(item[1].gain), item[0]))
    serving = los[:2]
    precoders = []
    combiners = []
    for _, path in serving:
        precoders.append(
            grid_steering_vector(config.n_ant_bs, path.aod_grid_index + path.aod_offset)
            / np.sqrt(config.n_ant_bs)
        )
        combiners.append(
            grid_steering_vector(config.n_ant_user, path.aoa_grid_index + path.aoa_offset)
            / np.sqrt(config.n_ant_user)
        )
    bs_indices = [m for m, _ in serving]
    return bs_indices, np.column_stack(precoders), np.column_stack(combiners)


def _per_bs_matrices(vectors, config: SystemConfig, dft):
    """Angular vectors (P, dim) back to per-BS channel matrices (P, M, U, B)."""
    n_p = vectors.shape[0]
    block = config.n_ant_user * config.n_ant_bs
    out = np.empty(
        (n_p, config.n_bs, config.n_ant_user, config.n_ant_bs), dtype=np.complex128
    )
    for p in range(n_p):
        for m in range(config.n_bs):
            ang = vectors[p, m * block : (m + 1) * block].reshape(
                (config.n_ant_user, config.n_ant_bs), order="F"
            )
            out[p, m] = inverse_angular_transform(ang, dft)
    return out


def _effective_channels(h_matrices, bs_indices, precoders, combiners):
    """2x2 combined channel per subcarrier for one CSI source."""
    n_p = h_matrices.shape[0]
    h_eff = np.empty((n_p, 2, 2), dtype=np.complex128)
    for p in range(n_p):
        for k, m in enumerate(bs_indices):
            h_eff[p, :, k] = combiners.conj().T @ (h_matrices[p, m] @ precoders[:, k])
    return h_eff


def _zf_precoders(h_eff):
    """Per-subcarrier zero-forcing precoders with unit average transmit power."""
    n_p = h_eff.shape[0]
    precoders = np.zeros_like(h_eff)
    betas = np.zeros(n_p)
    for p in range(n_p):
        inv = np.linalg.pinv(h_eff[p], rcond=1e-10)
        norm = np.linalg.norm(inv)
        if norm == 0.0:
            betas[p] = 1.0  # degenerate CSI (all-zero estimate): transmit nothing
        else:
            precoders[p] = inv
            betas[p] = np.sqrt(2.0) / norm
    return precoders, betas


def ber_experiment(
    config: SystemConfig,
    snr_values,
    n_symbols: int,
    seed: int,
    n_realizations: int = 4,
) -> ResultTable:
    """Downlink BER with perfect, ssamp and adaptive-OMP CSI.

    The two strongest LOS paths across the BSs carry one 16-QAM stream each
    through steering-vector analog stages; the digital stage zero-forces the
    2x2 effective channel computed from each CSI source, and symbols always
    travel through the true channel.  Channel estimation and the data stage
    run at the same SNR.  Data rides the pilot subcarriers, so configs with
    n_pilot_subcarriers = n_subcarriers cover the whole grid.  At least 10^4
    symbols per SNR point, split over n_realizations channel draws; noise and
    payloads are shared across CSI sources so comparisons are paired.
    """
    if config.n_bs < 2:
        raise ValueError("ber_experiment needs n_bs >= 2 for two LOS streams")
    snr_values = [float(v) for v in snr_values]
    if not snr_values:
        raise ValueError("snr_values must be non-empty")
    if n_symbols < 10**4:
        raise ValueError("n_symbols must be at least 10^4 per SNR point")
    if n_realizations < 1:
        raise ValueError("n_realizations must be positive")

    n_p = config.n_pilot_subcarriers
    # Symbol vectors per (realization, subcarrier); 2 QAM symbols per vector.
    n_vec = -(-n_symbols // (n_realizations * n_p * 2))
    rows = []
    for point, snr_db in enumerate(snr_values):
        cfg = replace(config, snr_db=snr_db)
        snr_lin = 10.0 ** (snr_db / 10.0)
        errors = {name: 0 for name in CSI_SOURCES}
        total_bits = 0
        total_symbols = 0
        for real in range(n_realizations):
            ss = np.random.SeedSequence(entropy=seed, spawn_key=(point, real))
            chan_seed, ens_seed, noise_seed, data_seed = (
                int(s) for s in ss.generate_state(4)
            )
            chan, dft, aset, operators, received, sigma2 = _synthesize(
                cfg, chan_seed, ens_seed, noise_seed
            )
            est_ssamp = _ssamp_gain_scaled(
                received, operators, cfg, p_th_for_snr(snr_db)
            )
            est_omp = adaptive_omp(
                received,
                operators,
                _omp_threshold(sigma2, operators.shape[1], received),
            )

            bs_indices, precoders, combiners = _los_beams(chan, cfg)
            channels = {
                "perfect": _per_bs_matrices(aset.vectors, cfg, dft),
                "ssamp": _per_bs_matrices(est_ssamp.estimates, cfg, dft),
                "adaptive_omp": _per_bs_matrices(est_omp.estimates, cfg, dft),
            }
            h_eff = {
                name: _effective_channels(mats, bs_indices, precoders, combiners)
                for name, mats in channels.items()
            }
            zf = {name: _zf_precoders(h_eff[name]) for name in CSI_SOURCES}
            # Data noise is calibrated on the perfect-CSI link and shared by
            # all sources, as are the payload bits.
            beta_true = zf["perfect"][1]
            rng = np.random.default_rng(data_seed)
            for p in range(n_p):
                bits = rng.integers(0, 2, size=2 * n_vec * 4)
                sym = qam16_modulate(bits).reshape(2, n_vec)
                sigma_d2 = beta_true[p] ** 2 / snr_lin
                noise = np.sqrt(sigma_d2 / 2.0) * (
                    rng.standard_normal((cfg.n_ant_user, n_vec))
                    + 1j * rng.standard_normal((cfg.n_ant_user, n_vec))
                )
                eta = combiners.conj().T @ noise
                for name in CSI_SOURCES:
                    precoder, beta = zf[name][0][p], zf[name][1][p]
                    tx = beta * (precoder @ sym)
                    rx = h_eff["perfect"][p] @ tx + eta
                    decided = qam16_hard_bits((rx / beta).ravel())
                    errors[name] += int(np.sum(decided != bits))
                total_bits += bits.size
                total_symbols += sym.size
        for name in CSI_SOURCES:
            rows.append((snr_db, name, errors[name] / total_bits, total_symbols))
    return ResultTable(columns=BER_COLUMNS, rows=tuple(rows))
