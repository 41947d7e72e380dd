"""Pilot ensembles and stacked measurement operators."""

import numpy as np
import pytest
from scipy import stats

from mmwave_scs.channel import DftPair, SystemConfig, dft_pair, draw_multipath
from mmwave_scs.channel import angular_channel_set
from mmwave_scs.pilots import (
    PilotEnsemble,
    build_measurement_set,
    calibrate_noise_variance,
    combiner_matrix,
    draw_ensemble,
    measurement_operator,
    measurement_operators,
    pilot_subcarrier_indices,
    pilot_vector,
    slot_measurement,
    stack_measurements,
    synthesize_received,
)

from conftest import DESK_EXACT, DESK_SNR20, synth


def test_all_stages_unit_modulus():
    ens = draw_ensemble(DESK_EXACT, 0)
    for stage in (ens.rf_combiner, ens.bb_combiner, ens.rf_precoder, ens.eff_training):
        np.testing.assert_allclose(np.abs(stage), 1.0, atol=1e-12)


def test_stage_shapes():
    cfg = DESK_SNR20
    ens = draw_ensemble(cfg, 1)
    g, p = cfg.n_slots, cfg.n_pilot_subcarriers
    # analog stages carry no subcarrier axis; baseband stages do
    assert ens.rf_combiner.shape == (g, cfg.n_ant_user, cfg.n_chain_user)
    assert ens.bb_combiner.shape == (g, p, cfg.n_chain_user, cfg.n_chain_user)
    assert ens.rf_precoder.shape == (g, cfg.n_bs, cfg.n_ant_bs, cfg.n_chain_bs)
    assert ens.eff_training.shape == (g, p, cfg.n_bs, cfg.n_chain_bs)
    assert np.any(ens.bb_combiner[0, 0] != ens.bb_combiner[0, 1])
    assert ens.n_slots == g and ens.n_pilot_subcarriers == p


def test_pilot_scale():
    ens = draw_ensemble(DESK_EXACT, 2)
    assert ens.pilot_scale == pytest.approx(
        1.0 / np.sqrt(DESK_EXACT.n_ant_bs * DESK_EXACT.n_chain_bs)
    )
    f = pilot_vector(ens, 0, 0, 0)
    # each antenna feed sums n_chain_bs unit phasors then scales
    assert np.all(np.abs(f) <= DESK_EXACT.n_chain_bs * ens.pilot_scale + 1e-12)


def test_phases_uniform():
    # pool every training stage at G=220 to get past 1e5 samples
    ens = draw_ensemble(SystemConfig(n_slots=220), 42)
    phases = np.concatenate(
        [
            np.angle(ens.rf_combiner).ravel(),
            np.angle(ens.bb_combiner).ravel(),
            np.angle(ens.rf_precoder).ravel(),
            np.angle(ens.eff_training).ravel(),
        ]
    ) % (2 * np.pi)
    assert phases.size >= 10**5
    result = stats.kstest(phases / (2 * np.pi), "uniform")
    assert result.pvalue > 0.01


def test_ensemble_deterministic():
    a = draw_ensemble(DESK_EXACT, 77)
    b = draw_ensemble(DESK_EXACT, 77)
    np.testing.assert_array_equal(a.rf_combiner, b.rf_combiner)
    np.testing.assert_array_equal(a.eff_training, b.eff_training)


def test_slot_operator_matches_physical_model():
    """The slot operator acting on the aggregate vector must equal combining
    the per-BS channel outputs directly: Z^H sum_m H_m f_m."""
    cfg = DESK_EXACT
    dft = dft_pair(cfg)
    ens = draw_ensemble(cfg, 5)
    rng = np.random.default_rng(6)
    block = cfg.n_ant_user * cfg.n_ant_bs
    for trial in range(100):
        t = int(rng.integers(0, cfg.n_slots))
        p = int(rng.integers(0, cfg.n_pilot_subcarriers))
        ang = rng.standard_normal((cfg.n_bs, cfg.n_ant_user, cfg.n_ant_bs)) + (
            1j * rng.standard_normal((cfg.n_bs, cfg.n_ant_user, cfg.n_ant_bs))
        )
        vec = np.concatenate([ang[m].flatten(order="F") for m in range(cfg.n_bs)])
        z = combiner_matrix(ens, t, p)
        direct = np.zeros(cfg.n_chain_user, dtype=complex)
        for m in range(cfg.n_bs):
            h_freq = dft.rx @ ang[m] @ dft.tx.conj().T
            direct += z.conj().T @ (h_freq @ pilot_vector(ens, t, p, m))
        via_operator = slot_measurement(ens, dft, t, p) @ vec
        np.testing.assert_allclose(via_operator, direct, rtol=1e-10, atol=1e-12)
    assert vec.size == cfg.n_bs * block


def test_slot_operator_selection_row():
    # combiner picking rx antenna i and a pilot hitting tx antenna j reads
    # exactly aggregate entry j * N_US + i, scaled by the pilot normalisation
    n_us, n_bs_ant = 3, 4
    i, j = 1, 2
    ens = PilotEnsemble(
        rf_combiner=np.eye(n_us)[:, [i]][None],
        bb_combiner=np.ones((1, 1, 1, 1)),
        rf_precoder=np.eye(n_bs_ant)[:, [j]][None, None],
        eff_training=np.ones((1, 1, 1, 1)),
    )
    dft_id = DftPair(rx=np.eye(n_us, dtype=complex), tx=np.eye(n_bs_ant, dtype=complex))
    row = slot_measurement(ens, dft_id, 0, 0)
    assert row.shape == (1, n_us * n_bs_ant)
    nonzero = np.flatnonzero(np.abs(row[0]) > 1e-12)
    assert nonzero.tolist() == [j * n_us + i]
    assert row[0, j * n_us + i] == pytest.approx(ens.pilot_scale)


def test_slot_operator_published_scale_shape():
    cfg = SystemConfig(
        n_ant_bs=512, n_chain_bs=8, n_ant_user=32, n_chain_user=2, n_bs=4,
        n_paths=4, n_subcarriers=64, n_pilot_subcarriers=1, n_slots=1,
        max_delay_s=100e-9,
    )
    op = slot_measurement(draw_ensemble(cfg, 1), dft_pair(cfg), 0, 0)
    assert op.shape == (2, 65536)


def test_stacking_order():
    cfg = DESK_EXACT
    dft = dft_pair(cfg)
    ens = draw_ensemble(cfg, 9)
    full = measurement_operator(ens, dft, pilot=0)
    assert full.shape == (cfg.measurement_rows, cfg.angular_dimension)
    chains = cfg.n_chain_user
    for t in (0, 1, cfg.n_slots - 1):
        np.testing.assert_array_equal(
            full[t * chains : (t + 1) * chains], slot_measurement(ens, dft, t, 0)
        )


def test_stack_validation():
    with pytest.raises(ValueError):
        stack_measurements([])
    with pytest.raises(ValueError, match="columns"):
        stack_measurements([np.zeros((2, 4)), np.zeros((2, 5))])
    single = [np.arange(8.0).reshape(2, 4)]
    np.testing.assert_array_equal(stack_measurements(single), single[0])


def test_operator_entry_statistics():
    # default config: 16 operators of 32 x 512 = 262144 entries
    cfg = SystemConfig()
    ops = measurement_operators(draw_ensemble(cfg, 31), dft_pair(cfg))
    assert ops.shape == (16, 32, 512)
    entries = ops.ravel()
    assert abs(entries.mean()) <= 0.01 * entries.std()
    ratio = entries.real.var() / entries.imag.var()
    assert 0.95 <= ratio <= 1.05


def test_operators_differ_across_subcarriers():
    ops = measurement_operators(draw_ensemble(DESK_EXACT, 12), dft_pair(DESK_EXACT))
    for p in range(1, ops.shape[0]):
        assert np.max(np.abs(ops[p] - ops[0])) > 1e-6


def test_pilot_subcarrier_indices():
    cfg = DESK_EXACT  # N = P = 8
    np.testing.assert_array_equal(pilot_subcarrier_indices(cfg), np.arange(1, 9))
    half = SystemConfig(n_subcarriers=8, n_pilot_subcarriers=4, max_delay_s=25e-9)
    np.testing.assert_array_equal(pilot_subcarrier_indices(half), [1, 3, 5, 7])
    with pytest.raises(ValueError, match="divide"):
        pilot_subcarrier_indices(
            SystemConfig(n_subcarriers=8, n_pilot_subcarriers=3, max_delay_s=25e-9)
        )


class TestNoiseCalibration:
    def test_zero_db_identity(self):
        rng = np.random.default_rng(0)
        ops = rng.standard_normal((2, 4, 6)) + 1j * rng.standard_normal((2, 4, 6))
        vecs = rng.standard_normal((2, 6)) + 1j * rng.standard_normal((2, 6))
        energy = sum(
            float(np.sum(np.abs(ops[p] @ vecs[p]) ** 2)) for p in range(2)
        )
        assert calibrate_noise_variance(ops, vecs, 0.0) == pytest.approx(energy / (4 * 2))

    def test_infinite_snr_is_noiseless(self):
        rng = np.random.default_rng(1)
        ops = rng.standard_normal((1, 4, 6)) + 0j
        vecs = rng.standard_normal((1, 6)) + 0j
        assert calibrate_noise_variance(ops, vecs, float("inf")) == 0.0

    def test_monotone_in_snr(self):
        rng = np.random.default_rng(2)
        ops = rng.standard_normal((1, 4, 6)) + 0j
        vecs = rng.standard_normal((1, 6)) + 0j
        sig = [calibrate_noise_variance(ops, vecs, s) for s in (0.0, 10.0, 20.0)]
        assert sig[0] > sig[1] > sig[2] > 0.0

    def test_all_zero_signal_rejected(self):
        ops = np.zeros((2, 4, 6))
        vecs = np.zeros((2, 6))
        with pytest.raises(ValueError, match="zero"):
            calibrate_noise_variance(ops, vecs, 10.0)

    def test_empirical_snr(self):
        # realised SNR over 1e4 fresh noise draws stays within 0.1 dB
        cfg = DESK_SNR20
        aset, ops, _, sigma2 = synth(cfg, 77, 78, 0)
        signal = sum(
            float(np.sum(np.abs(ops[p] @ aset.vectors[p]) ** 2))
            for p in range(ops.shape[0])
        )
        clean = np.einsum("prd,pd->pr", ops, aset.vectors)
        noise_energy = 0.0
        n_entries = 0
        for draw in range(10**4):
            rec = synthesize_received(ops, aset.vectors, sigma2, 50_000 + draw)
            noise_energy += float(np.sum(np.abs(rec - clean) ** 2))
            n_entries += rec.size
        realized = 10.0 * np.log10(
            signal / (ops.shape[1] * ops.shape[0] * noise_energy / n_entries)
        )
        assert abs(realized - 20.0) <= 0.1


class TestSynthesize:
    def test_noiseless_is_exact(self):
        rng = np.random.default_rng(3)
        ops = rng.standard_normal((2, 4, 6)) + 1j * rng.standard_normal((2, 4, 6))
        vecs = rng.standard_normal((2, 6)) + 0j
        rec = synthesize_received(ops, vecs, 0.0, 99)
        # bit-exact: zero variance must add literally nothing
        np.testing.assert_array_equal(rec, np.stack([ops[p] @ vecs[p] for p in range(2)]))

    def test_zero_channel_noise_variance(self):
        ops = np.zeros((1, 100_000, 1))
        vecs = np.zeros((1, 1))
        rec = synthesize_received(ops, vecs, 0.25, 4)
        assert abs(rec.var() / 0.25 - 1.0) <= 0.02
        assert abs(rec.mean()) <= 0.01

    def test_seeded(self):
        ops = np.ones((1, 8, 1), dtype=complex)
        vecs = np.ones((1, 1), dtype=complex)
        a = synthesize_received(ops, vecs, 1.0, 5)
        b = synthesize_received(ops, vecs, 1.0, 5)
        c = synthesize_received(ops, vecs, 1.0, 6)
        np.testing.assert_array_equal(a, b)
        assert np.any(a != c)

    def test_negative_variance_rejected(self):
        with pytest.raises(ValueError):
            synthesize_received(np.ones((1, 2, 1)), np.ones((1, 1)), -1.0, 0)


def test_build_measurement_set():
    cfg = DESK_EXACT
    chan = draw_multipath(cfg, 41)
    dft = dft_pair(cfg)
    aset = angular_channel_set(chan, cfg, dft, pilot_subcarrier_indices(cfg))
    ens = draw_ensemble(cfg, 42)
    mset = build_measurement_set(ens, dft, cfg, aset.vectors, None, 43)
    assert mset.noise_variance == 0.0
    clean = np.stack(
        [mset.operators[p] @ aset.vectors[p] for p in range(mset.operators.shape[0])]
    )
    np.testing.assert_array_equal(mset.received, clean)
    np.testing.assert_array_equal(mset.pilot_indices, pilot_subcarrier_indices(cfg))
    noisy = build_measurement_set(ens, dft, cfg, aset.vectors, 20.0, 43)
    assert noisy.noise_variance > 0.0
    assert np.any(noisy.received != mset.received)
