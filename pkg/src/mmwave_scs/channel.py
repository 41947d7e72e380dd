"""Sparse angular-domain channel synthesis for hybrid-beamforming mmWave links.

A user terminal with a small ULA listens to a handful of base stations, each
with a larger ULA, over an OFDM grid.  Every link carries a few specular paths
(one line-of-sight plus Rician-weighted scatterers), so once both array
responses are projected onto DFT angle grids the per-subcarrier channel matrix
becomes sparse with a support that is shared by all subcarriers.  This module
draws such channels, maps them from the delay domain onto pilot subcarriers,
and vectorises the per-BS angular matrices into the joint sparse vectors that
the recovery stage estimates.
"""

from dataclasses import dataclass, field
import math

import numpy as np

# Magnitudes below SUPPORT_REL_TOL times the largest magnitude count as zero
# when reading a support off a vector.
SUPPORT_REL_TOL = 1e-9


@dataclass(frozen=True)
class LinkBudgetParams:
    """Scalar inputs of the log-distance link budget."""

    carrier_freq_mhz: float
    path_loss_exponent: float
    distance_km: float
    atmos_atten_db_per_km: float = 0.0
    rain_atten_db_per_km: float = 0.0

    def __post_init__(self):
        if self.carrier_freq_mhz <= 0:
            raise ValueError("carrier_freq_mhz must be positive")
        if self.distance_km <= 0:
            raise ValueError("distance_km must be positive")
        if self.path_loss_exponent <= 0:
            raise ValueError("path_loss_exponent must be positive")
        if self.atmos_atten_db_per_km < 0 or self.rain_atten_db_per_km < 0:
            raise ValueError("attenuation rates must be non-negative")


def path_loss_db(params: LinkBudgetParams) -> float:
    """Log-distance path loss in dB with atmospheric and rain attenuation.

    32.5 + 20 log10(f_MHz) + 10 alpha log10(d_km) + (a_atm + a_rain) d_km.
    """
    return (
        32.5
        + 20.0 * math.log10(params.carrier_freq_mhz)
        + 10.0 * params.path_loss_exponent * math.log10(params.distance_km)
        + (params.atmos_atten_db_per_km + params.rain_atten_db_per_km)
        * params.distance_km
    )


@dataclass(frozen=True)
class SystemConfig:
    """Array, OFDM and training geometry for one multi-BS downlink.

    Defaults are the desk-scale setup used throughout the test suite; they run
    in seconds.  The large published-style setup (512-antenna BS, 64
    subcarriers) is accepted too but takes far longer per trial.
    """

    n_ant_bs: int = 32          # BS ULA size
    n_chain_bs: int = 4         # BS RF chains
    n_ant_user: int = 8         # user ULA size
    n_chain_user: int = 2       # user RF chains
    n_bs: int = 2               # cooperating base stations
    n_paths: int = 4            # paths per BS link (1 LOS + rest NLOS)
    n_subcarriers: int = 16     # OFDM size N
    n_pilot_subcarriers: int = 16
    n_slots: int = 16           # training slots G
    bandwidth_hz: float = 0.25e9
    max_delay_s: float = 50e-9
    antenna_spacing_ratio: float = 0.5
    rician_k_db: float = 10.0
    snr_db: float = 20.0

    def __post_init__(self):
        ints = (
            ("n_ant_bs", self.n_ant_bs),
            ("n_chain_bs", self.n_chain_bs),
            ("n_ant_user", self.n_ant_user),
            ("n_chain_user", self.n_chain_user),
            ("n_bs", self.n_bs),
            ("n_paths", self.n_paths),
            ("n_subcarriers", self.n_subcarriers),
            ("n_pilot_subcarriers", self.n_pilot_subcarriers),
            ("n_slots", self.n_slots),
        )
        for name, value in ints:
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.n_chain_user > self.n_ant_user:
            raise ValueError(
                f"n_chain_user ({self.n_chain_user}) must be <= "
                f"n_ant_user ({self.n_ant_user})"
            )
        if self.n_chain_bs > self.n_ant_bs:
            raise ValueError(
                f"n_chain_bs ({self.n_chain_bs}) must be <= "
                f"n_ant_bs ({self.n_ant_bs})"
            )
        if self.n_pilot_subcarriers > self.n_subcarriers:
            raise ValueError(
                f"n_pilot_subcarriers ({self.n_pilot_subcarriers}) must be <= "
                f"n_subcarriers ({self.n_subcarriers})"
            )
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")
        if self.max_delay_s < 0:
            raise ValueError("max_delay_s must be non-negative")
        # Delay spread must fit inside the cyclic prefix implied by the FFT.
        if self.max_delay_s * self.bandwidth_hz >= self.n_subcarriers:
            raise ValueError(
                f"max_delay_s ({self.max_delay_s}) * bandwidth_hz "
                f"({self.bandwidth_hz}) must be < n_subcarriers "
                f"({self.n_subcarriers})"
            )
        if self.antenna_spacing_ratio <= 0:
            raise ValueError("antenna_spacing_ratio must be positive")

    @property
    def angular_dimension(self) -> int:
        """Length of the aggregate angular vector: M * N_BS * N_US."""
        return self.n_bs * self.n_ant_bs * self.n_ant_user

    @property
    def measurement_rows(self) -> int:
        """Stacked measurement count per pilot subcarrier: G * user chains."""
        return self.n_slots * self.n_chain_user

    @property
    def aggregate_sparsity_bound(self) -> int:
        """Upper bound on the joint support size for on-grid channels."""
        return self.n_bs * self.n_paths


@dataclass(frozen=True)
class PathComponent:
    """One specular path of a BS-to-user link."""

    gain: complex
    delay_s: float
    aoa_grid_index: int
    aod_grid_index: int
    is_los: bool
    # Fractional grid offsets; zero for on-grid draws.
    aoa_offset: float = 0.0
    aod_offset: float = 0.0


@dataclass(frozen=True)
class MultipathChannel:
    """Per-BS path lists; exactly one LOS path per link."""

    links: tuple

    def __post_init__(self):
        for m, link in enumerate(self.links):
            n_los = sum(1 for path in link if path.is_los)
            if n_los != 1:
                raise ValueError(f"link {m} has {n_los} LOS paths, expected 1")


@dataclass(frozen=True)
class DftPair:
    """Unitary DFT matrices matched to the receive and transmit arrays."""

    rx: np.ndarray
    tx: np.ndarray


def unitary_dft(n: int) -> np.ndarray:
    """n x n matrix with columns exp(+2j pi k i / n) / sqrt(n)."""
    k = np.arange(n)
    return np.exp(2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def dft_pair(config: SystemConfig) -> DftPair:
    return DftPair(rx=unitary_dft(config.n_ant_user), tx=unitary_dft(config.n_ant_bs))


def steering_vector(n_antennas: int, sin_angle: float, spacing_ratio: float = 0.5) -> np.ndarray:
    """ULA response exp(+2j pi k spacing_ratio sin_angle), k = 0..n-1."""
    if n_antennas < 1:
        raise ValueError("n_antennas must be >= 1")
    if abs(sin_angle) > 1.0:
        raise ValueError(f"sin_angle must lie in [-1, 1], got {sin_angle}")
    k = np.arange(n_antennas)
    return np.exp(2j * np.pi * k * spacing_ratio * sin_angle)


def grid_steering_vector(n_antennas: int, grid_position: float) -> np.ndarray:
    """ULA response at a (possibly fractional) DFT grid position.

    Integer positions land exactly on columns of unitary_dft(n) scaled by
    sqrt(n); fractional positions model off-grid leakage.
    """
    k = np.arange(n_antennas)
    return np.exp(2j * np.pi * k * grid_position / n_antennas)


def draw_multipath(config: SystemConfig, seed: int, on_grid: bool = True) -> MultipathChannel:
    """Draw a Rician multipath channel for every BS link.

    Path 0 of each link is the LOS component with mean power K/(K+1); the
    remaining L-1 paths split 1/(K+1) evenly.  All gains are zero-mean complex
    Gaussian, delays are uniform on [0, max_delay_s].  AoD grid bins are drawn
    without replacement within a link, so the (AoA, AoD) pairs never collide
    and the on-grid aggregate sparsity stays exactly n_bs * n_paths; AoA bins
    are drawn independently and may repeat.  n_paths = 1 degenerates to a
    pure-LOS link.
    """
    rng = np.random.default_rng(seed)
    n_paths = config.n_paths
    if n_paths > config.n_ant_bs:
        raise ValueError(
            f"n_paths ({n_paths}) exceeds the transmit angular grid "
            f"({config.n_ant_bs}); AoD bins are drawn without replacement"
        )
    k_lin = 10.0 ** (config.rician_k_db / 10.0)
    if n_paths == 1:
        powers = np.array([1.0])
    else:
        nlos = 1.0 / ((k_lin + 1.0) * (n_paths - 1))
        powers = np.full(n_paths, nlos)
        powers[0] = k_lin / (k_lin + 1.0)

    links = []
    for _ in range(config.n_bs):
        std = np.sqrt(powers / 2.0)
        gains = std * (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths))
        delays = rng.uniform(0.0, config.max_delay_s, n_paths)
        aoa = rng.integers(0, config.n_ant_user, size=n_paths)
        aod = rng.choice(config.n_ant_bs, size=n_paths, replace=False)
        if on_grid:
            aoa_off = np.zeros(n_paths)
            aod_off = np.zeros(n_paths)
        else:
            aoa_off = rng.uniform(-0.5, 0.5, n_paths)
            aod_off = rng.uniform(-0.5, 0.5, n_paths)
        link = tuple(
            PathComponent(
                gain=complex(gains[l]),
                delay_s=float(delays[l]),
                aoa_grid_index=int(aoa[l]),
                aod_grid_index=int(aod[l]),
                is_los=(l == 0),
                aoa_offset=float(aoa_off[l]),
                aod_offset=float(aod_off[l]),
            )
            for l in range(n_paths)
        )
        links.append(link)
    return MultipathChannel(links=tuple(links))


def delay_to_frequency(
    channel: MultipathChannel, config: SystemConfig, subcarrier_indices
) -> np.ndarray:
    """Per-subcarrier frequency-domain channel matrices.

    Returns an array of shape (len(indices), n_bs, n_ant_user, n_ant_bs) with
    entry [p, m] = sum_l gain_l a_rx(l) a_tx(l)^H exp(-2j pi (xi_p - 1)
    delay_l B / N).  Subcarrier indices are 1-based and must lie in [1, N].
    """
    idx = np.asarray(subcarrier_indices, dtype=int)
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError("subcarrier_indices must be a non-empty 1-D sequence")
    if idx.min() < 1 or idx.max() > config.n_subcarriers:
        raise ValueError(
            f"subcarrier indices must lie in [1, {config.n_subcarriers}]"
        )
    n_p = idx.size
    out = np.zeros(
        (n_p, config.n_bs, config.n_ant_user, config.n_ant_bs), dtype=np.complex128
    )
    # Normalised delay: tau * B / N cycles per subcarrier step.
    delay_scale = config.bandwidth_hz / config.n_subcarriers
    for m, link in enumerate(channel.links):
        for path in link:
            a_rx = grid_steering_vector(
                config.n_ant_user, path.aoa_grid_index + path.aoa_offset
            )
            a_tx = grid_steering_vector(
                config.n_ant_bs, path.aod_grid_index + path.aod_offset
            )
            ramp = np.exp(-2j * np.pi * (idx - 1) * path.delay_s * delay_scale)
            out[:, m] += (
                path.gain * ramp[:, None, None] * np.outer(a_rx, a_tx.conj())[None]
            )
    return out


def angular_transform(freq_matrices: np.ndarray, dft: DftPair) -> np.ndarray:
    """Project channel matrices onto the angular grids: A_rx^H H A_tx."""
    return dft.rx.conj().T @ freq_matrices @ dft.tx


def inverse_angular_transform(angular_matrices: np.ndarray, dft: DftPair) -> np.ndarray:
    """Undo angular_transform: A_rx H_a A_tx^H."""
    return dft.rx @ angular_matrices @ dft.tx.conj().T


def aggregate_sparse_vector(angular_matrices: np.ndarray):
    """Stack per-BS angular matrices column-major into one vector.

    angular_matrices has shape (n_bs, n_ant_user, n_ant_bs).  Entry (r, c) of
    block m lands at index m*N_BS*N_US + c*N_US + r.  Returns (vector,
    support) where support holds indices whose magnitude exceeds
    SUPPORT_REL_TOL times the maximum (empty for an all-zero vector).
    """
    mats = np.asarray(angular_matrices)
    if mats.ndim != 3:
        raise ValueError("expected shape (n_bs, n_ant_user, n_ant_bs)")
    vec = np.concatenate([mats[m].flatten(order="F") for m in range(mats.shape[0])])
    mags = np.abs(vec)
    peak = mags.max() if vec.size else 0.0
    if peak == 0.0:
        support = np.array([], dtype=int)
    else:
        support = np.flatnonzero(mags > SUPPORT_REL_TOL * peak)
    return vec, support


@dataclass(frozen=True)
class AngularChannelSet:
    """Aggregate angular vectors for all pilot subcarriers plus their support.

    `support` is the union of per-subcarrier supports; for on-grid channels
    every subcarrier has exactly this support (common-support property).
    """

    vectors: np.ndarray          # (P, n_bs * n_ant_bs * n_ant_user)
    support: np.ndarray          # sorted indices
    subcarrier_indices: np.ndarray

    @property
    def sparsity(self) -> int:
        return int(self.support.size)


def angular_channel_set(
    channel: MultipathChannel,
    config: SystemConfig,
    dft: DftPair,
    subcarrier_indices,
) -> AngularChannelSet:
    """Build the joint sparse vectors seen by the recovery stage."""
    freq = delay_to_frequency(channel, config, subcarrier_indices)
    ang = angular_transform(freq, dft)
    vectors = []
    support = np.array([], dtype=int)
    for p in range(ang.shape[0]):
        vec, supp = aggregate_sparse_vector(ang[p])
        vectors.append(vec)
        support = np.union1d(support, supp)
    return AngularChannelSet(
        vectors=np.array(vectors),
        support=support.astype(int),
        subcarrier_indices=np.asarray(subcarrier_indices, dtype=int),
    )
