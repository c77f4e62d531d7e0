from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import eigh, toeplitz
from scipy.special import j0

SPEED_OF_LIGHT: float = 3e8
DEFAULT_CLUSTERS: int = 20
DEFAULT_SPACING: float = 0.5


class ChannelError(ValueError):
    """
    Raised when a channel generator receives an unusable configuration.
    """


@dataclass(frozen=True)
class ArrayGeometry:
    """
    Uniform rectangular array, used for both the BS antennas and the RS elements.
    Spacings are expressed in wavelengths.
    """
    count_h: int
    count_v: int
    spacing_h: float = DEFAULT_SPACING
    spacing_v: float = DEFAULT_SPACING

    def __post_init__(self):
        if self.count_h < 1 or self.count_v < 1:
            raise ChannelError('Array counts must be positive, got {}x{}'.format(self.count_h, self.count_v))
        if self.spacing_h <= 0 or self.spacing_v <= 0:
            raise ChannelError('Array spacings must be positive')

    @property
    def size(self) -> int:
        return self.count_h * self.count_v

    @staticmethod
    def square(total: int, spacing: float = DEFAULT_SPACING) -> ArrayGeometry:
        """
        Most square factorisation count_h x count_v = total, with count_h >= count_v.
        """
        if total < 1:
            raise ChannelError('Array size must be positive, got {}'.format(total))
        count_v = int(math.isqrt(total))
        while total % count_v != 0:
            count_v -= 1
        return ArrayGeometry(total // count_v, count_v, spacing, spacing)


@dataclass(frozen=True)
class LinkBudget:
    """
    Average link gains (sigma_h^2, sigma_g^2), noise power and transmit power, all linear.
    """
    gain_bs_rs: float
    gain_rs_ue: float
    noise_power: float
    tx_power: float

    def __post_init__(self):
        for name in ('gain_bs_rs', 'gain_rs_ue', 'noise_power', 'tx_power'):
            if not getattr(self, name) > 0:
                raise ChannelError('{} must be strictly positive, got {}'.format(name, getattr(self, name)))

    @staticmethod
    def from_db(gain_bs_rs_db: float, gain_rs_ue_db: float, noise_dbw: float, tx_power_dbw: float) -> LinkBudget:
        return LinkBudget(db_to_linear(gain_bs_rs_db), db_to_linear(gain_rs_ue_db),
                          db_to_linear(noise_dbw), db_to_linear(tx_power_dbw))

    @property
    def tx_power_dbw(self) -> float:
        return linear_to_db(self.tx_power)


@dataclass(frozen=True)
class OfdmNumerology:
    subcarriers: int = 1024
    cp_length: int = 72
    subcarrier_spacing: float = 30e3
    frame_symbols: int = 140

    def __post_init__(self):
        if self.subcarriers < 1:
            raise ChannelError('subcarriers must be positive')
        if not 0 <= self.cp_length < self.subcarriers:
            raise ChannelError('cp_length must be in [0, subcarriers), got {}'.format(self.cp_length))
        if self.subcarrier_spacing <= 0:
            raise ChannelError('subcarrier_spacing must be positive')
        if self.frame_symbols < 2:
            raise ChannelError('frame_symbols must be at least 2 for differential decoding')

    @property
    def symbol_duration(self) -> float:
        """
        OFDM symbol duration including the cyclic prefix, in seconds.
        """
        return (self.subcarriers + self.cp_length) / (self.subcarriers * self.subcarrier_spacing)

    def subcarrier_indices(self, count: Optional[int] = None) -> np.ndarray:
        """
        Evenly spaced subset of subcarrier indices; all of them when count is None.
        """
        if count is None or count >= self.subcarriers:
            return np.arange(self.subcarriers)
        if count < 1:
            raise ChannelError('At least one subcarrier must be simulated')
        return np.arange(count) * (self.subcarriers // count)


@dataclass(frozen=True)
class MobilityModel:
    doppler_hz: float = 0.0
    carrier_hz: float = 3.5e9
    motion_azimuth_deg: float = 0.0

    def __post_init__(self):
        if self.doppler_hz < 0:
            raise ChannelError('doppler_hz must be non-negative, got {}'.format(self.doppler_hz))
        if self.carrier_hz <= 0:
            raise ChannelError('carrier_hz must be positive')

    @staticmethod
    def from_speed(speed_kmh: float, carrier_hz: float = 3.5e9, motion_azimuth_deg: float = 0.0) -> MobilityModel:
        return MobilityModel(doppler_from_speed(speed_kmh, carrier_hz), carrier_hz, motion_azimuth_deg)

    @property
    def speed_kmh(self) -> float:
        return self.doppler_hz * SPEED_OF_LIGHT / self.carrier_hz * 3.6


@dataclass(frozen=True)
class ClusterProfile:
    """
    Cluster-level description of one link. Angles in degrees, departure refers to the
    transmitting node of the uplink (RS for BS-RS, UE for RS-UE).
    """
    delay_spread_s: float
    asd: float
    asa: float
    zsd: float
    zsa: float
    los_azimuth_departure: float = 0.0
    los_zenith_departure: float = 90.0
    los_azimuth_arrival: float = 180.0
    los_zenith_arrival: float = 90.0
    cluster_count: int = DEFAULT_CLUSTERS

    def __post_init__(self):
        if self.cluster_count < 1:
            raise ChannelError('cluster_count must be positive')
        if not self.delay_spread_s > 0:
            raise ChannelError('delay_spread_s must be positive, got {}'.format(self.delay_spread_s))
        if min(self.asd, self.asa, self.zsd, self.zsa) <= 0:
            raise ChannelError('Angular spreads must be positive')

    @staticmethod
    def from_positions(tx: Sequence[float], rx: Sequence[float], delay_spread_s: float, asd: float, asa: float,
                       zsd: float, zsa: float, cluster_count: int = DEFAULT_CLUSTERS) -> ClusterProfile:
        azimuth_departure, zenith_departure = los_angles(tx, rx)
        azimuth_arrival, zenith_arrival = los_angles(rx, tx)
        return ClusterProfile(delay_spread_s, asd, asa, zsd, zsa, azimuth_departure, zenith_departure,
                              azimuth_arrival, zenith_arrival, cluster_count)


@dataclass(frozen=True)
class ChannelRealization:
    """
    bs_rs: K x B x M, quasi-static over the frame.
    rs_ue: K x N x M, one vector per subcarrier and OFDM symbol.
    """
    bs_rs: np.ndarray
    rs_ue: np.ndarray

    def __post_init__(self):
        if self.bs_rs.ndim != 3 or self.rs_ue.ndim != 3:
            raise ChannelError('Expected bs_rs K x B x M and rs_ue K x N x M arrays')
        if self.bs_rs.shape[0] != self.rs_ue.shape[0] or self.bs_rs.shape[2] != self.rs_ue.shape[2]:
            raise ChannelError('Inconsistent shapes {} and {}'.format(self.bs_rs.shape, self.rs_ue.shape))

    @property
    def subcarriers(self) -> int:
        return self.bs_rs.shape[0]

    @property
    def antennas(self) -> int:
        return self.bs_rs.shape[1]

    @property
    def elements(self) -> int:
        return self.bs_rs.shape[2]

    @property
    def symbols(self) -> int:
        return self.rs_ue.shape[1]


def db_to_linear(value_db: float) -> float:
    return 10 ** (value_db / 10)


def linear_to_db(value: float) -> float:
    return 10 * math.log10(value)


def doppler_from_speed(speed_kmh: float, carrier_hz: float) -> float:
    return (speed_kmh / 3.6) * carrier_hz / SPEED_OF_LIGHT


def los_angles(source: Sequence[float], target: Sequence[float]) -> tuple[float, float]:
    """
    Azimuth and zenith (degrees) of the direction pointing from source to target.
    """
    d = np.asarray(target, dtype=float) - np.asarray(source, dtype=float)
    distance = np.linalg.norm(d)
    if distance == 0:
        raise ChannelError('Nodes share the same position')
    return float(np.degrees(np.arctan2(d[1], d[0]))), float(np.degrees(np.arccos(d[2] / distance)))


def _bessel_argument(delta_n: Union[int, np.ndarray], mob: MobilityModel, ofdm: OfdmNumerology):
    return 2 * np.pi * mob.doppler_hz * (np.asarray(delta_n) / ofdm.subcarrier_spacing) * \
        (1 + ofdm.cp_length / ofdm.subcarriers)


def doppler_autocorr(delta_n: Union[int, np.ndarray], mob: MobilityModel,
                     ofdm: OfdmNumerology) -> Union[float, np.ndarray]:
    """
    Magnitude of the temporal autocorrelation of the RS-UE channel at a lag of delta_n symbols.
    """
    result = np.abs(j0(_bessel_argument(delta_n, mob, ofdm)))
    return float(result) if np.ndim(result) == 0 else result


def temporal_correlation(mob: MobilityModel, ofdm: OfdmNumerology) -> np.ndarray:
    """
    N x N Toeplitz correlation matrix built from the signed J0 (Clarke) autocorrelation.
    """
    return toeplitz(j0(_bessel_argument(np.arange(ofdm.frame_symbols), mob, ofdm)))


def _coloring_matrix(correlation: np.ndarray) -> np.ndarray:
    eigenvalues, eigenvectors = eigh(correlation)
    eigenvalues = np.clip(eigenvalues, 0, None)
    if not np.all(np.isfinite(eigenvalues)) or eigenvalues.sum() <= 0:
        raise ChannelError('Temporal correlation matrix cannot be factorised, check the numerology')
    return (eigenvectors * np.sqrt(eigenvalues)) @ eigenvectors.T


def complex_gaussian(rng: np.random.Generator, shape: tuple, variance: float) -> np.ndarray:
    """
    Circularly-symmetric complex Gaussian samples of the given variance.
    """
    return np.sqrt(variance / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def gen_bs_rs_iid(geom_bs: ArrayGeometry, geom_rs: ArrayGeometry, budget: LinkBudget, ofdm: OfdmNumerology,
                  rng: np.random.Generator, subcarriers: Optional[np.ndarray] = None) -> np.ndarray:
    """
    IID Rayleigh BS-RS channel, K x B x M, shared by every OFDM symbol of the frame.
    """
    k = ofdm.subcarriers if subcarriers is None else len(subcarriers)
    return complex_gaussian(rng, (k, geom_bs.size, geom_rs.size), budget.gain_bs_rs)


def gen_rs_ue_correlated(geom_rs: ArrayGeometry, budget: LinkBudget, ofdm: OfdmNumerology, mob: MobilityModel,
                         rng: np.random.Generator, subcarriers: Optional[np.ndarray] = None) -> np.ndarray:
    """
    IID Rayleigh RS-UE channel, K x N x M, with Doppler correlation across the N symbols.
    """
    k = ofdm.subcarriers if subcarriers is None else len(subcarriers)
    n = ofdm.frame_symbols
    m = geom_rs.size
    if mob.doppler_hz == 0:
        static = complex_gaussian(rng, (k, 1, m), budget.gain_rs_ue)
        return np.repeat(static, n, axis=1)
    coloring = _coloring_matrix(temporal_correlation(mob, ofdm))
    white = complex_gaussian(rng, (k, n, m), budget.gain_rs_ue)
    return np.einsum('ij,kjm->kim', coloring, white)


def gen_iid_pair(geom_bs: ArrayGeometry, geom_rs: ArrayGeometry, budget: LinkBudget, ofdm: OfdmNumerology,
                 mob: MobilityModel, rng: np.random.Generator,
                 subcarriers: Optional[np.ndarray] = None) -> ChannelRealization:
    bs_rs = gen_bs_rs_iid(geom_bs, geom_rs, budget, ofdm, rng, subcarriers)
    rs_ue = gen_rs_ue_correlated(geom_rs, budget, ofdm, mob, rng, subcarriers)
    return ChannelRealization(bs_rs, rs_ue)


def cascade(real: ChannelRealization, phases, k: int, n: int) -> np.ndarray:
    """
    Effective cascaded channel q_{k,n} = H_k diag(psi_n) g_{k,n}, a length-B vector.
    """
    psi = np.asarray(getattr(phases, 'coefficients', phases))
    if psi.shape[-1] != real.elements:
        raise ChannelError('Phase schedule has {} elements, channel has {}'.format(psi.shape[-1], real.elements))
    # a single configuration is held over the whole frame
    held = psi.ndim == 1
    if not (0 <= k < real.subcarriers and 0 <= n < real.symbols and (held or n < psi.shape[0])):
        raise IndexError('Indices (k={}, n={}) out of range'.format(k, n))
    return real.bs_rs[k] @ ((psi if held else psi[n]) * real.rs_ue[k, n])


def cascade_grid(real: ChannelRealization, phases) -> np.ndarray:
    """
    Cascaded channel for every subcarrier and symbol, K x N x B.
    """
    psi = np.asarray(getattr(phases, 'coefficients', phases))
    if psi.shape != (real.symbols, real.elements):
        raise ChannelError('Phase schedule shape {} does not match N x M = {}'.format(
            psi.shape, (real.symbols, real.elements)))
    return np.einsum('kbm,knm->knb', real.bs_rs, psi[None, :, :] * real.rs_ue)


def per_element_cascade(real: ChannelRealization, n: int = 0) -> np.ndarray:
    """
    Per-element cascaded channel c_{k,b,m} = H_k[b, m] g_{k,n}[m], K x B x M.
    """
    return real.bs_rs * real.rs_ue[:, n, None, :]


def ura_response(azimuth_deg, zenith_deg, geom: ArrayGeometry) -> np.ndarray:
    """
    Steering vector of a URA. Element (p, q) sits at p * spacing_h on the horizontal axis and q * spacing_v on
    the vertical one; the flattened index is q * count_h + p. Array-valued angles add leading dimensions.
    """
    azimuth = np.radians(np.asarray(azimuth_deg, dtype=float))[..., None]
    zenith = np.radians(np.asarray(zenith_deg, dtype=float))[..., None]
    p = np.tile(np.arange(geom.count_h), geom.count_v)
    q = np.repeat(np.arange(geom.count_v), geom.count_h)
    phase = 2 * np.pi * (geom.spacing_h * p * np.sin(zenith) * np.sin(azimuth) +
                         geom.spacing_v * q * np.cos(zenith))
    return np.exp(1j * phase)


@dataclass(frozen=True)
class _Clusters:
    delays: np.ndarray
    powers: np.ndarray
    azimuth_departure: np.ndarray
    zenith_departure: np.ndarray
    azimuth_arrival: np.ndarray
    zenith_arrival: np.ndarray
    phases: np.ndarray


def cluster_powers(delays: np.ndarray, delay_spread_s: float) -> np.ndarray:
    """
    Exponential power-delay profile normalised to unit total power.
    """
    powers = np.exp(-delays / delay_spread_s)
    return powers / powers.sum()


def _wrapped_gaussian(rng: np.random.Generator, mean_deg: float, spread_deg: float, size: int) -> np.ndarray:
    return np.mod(mean_deg + rng.normal(0, spread_deg, size) + 180, 360) - 180


def _laplacian(rng: np.random.Generator, mean_deg: float, spread_deg: float, size: int) -> np.ndarray:
    # scale spread / sqrt(2) gives a standard deviation equal to the spread
    return mean_deg + rng.laplace(0, spread_deg / np.sqrt(2), size)


def draw_clusters(profile: ClusterProfile, rng: np.random.Generator) -> _Clusters:
    c = profile.cluster_count
    delays = rng.exponential(profile.delay_spread_s, c)
    return _Clusters(delays=delays,
                     powers=cluster_powers(delays, profile.delay_spread_s),
                     azimuth_departure=_wrapped_gaussian(rng, profile.los_azimuth_departure, profile.asd, c),
                     zenith_departure=_laplacian(rng, profile.los_zenith_departure, profile.zsd, c),
                     azimuth_arrival=_wrapped_gaussian(rng, profile.los_azimuth_arrival, profile.asa, c),
                     zenith_arrival=_laplacian(rng, profile.los_zenith_arrival, profile.zsa, c),
                     phases=rng.uniform(0, 2 * np.pi, c))


def _frequency_terms(clusters: _Clusters, ofdm: OfdmNumerology, subcarriers: np.ndarray) -> np.ndarray:
    # K x C
    frequencies = subcarriers * ofdm.subcarrier_spacing
    return np.exp(-2j * np.pi * frequencies[:, None] * clusters.delays[None, :])


def gen_geometric_pair(geom_bs: ArrayGeometry, geom_rs: ArrayGeometry, budget: LinkBudget, ofdm: OfdmNumerology,
                       mob: MobilityModel, profile_bs_rs: ClusterProfile, profile_rs_ue: ClusterProfile,
                       rng: np.random.Generator, subcarriers: Optional[np.ndarray] = None) -> ChannelRealization:
    """
    Geometric wideband channel: a superposition of clusters with exponential delays, wrapped Gaussian azimuths
    and Laplacian zeniths. Only the RS-UE link rotates with the UE motion.
    """
    if subcarriers is None:
        subcarriers = np.arange(ofdm.subcarriers)

    link = draw_clusters(profile_bs_rs, rng)
    amplitudes = np.sqrt(link.powers * budget.gain_bs_rs) * np.exp(1j * link.phases)
    bs_steering = ura_response(link.azimuth_arrival, link.zenith_arrival, geom_bs)  # C x B
    rs_steering = ura_response(link.azimuth_departure, link.zenith_departure, geom_rs)  # C x M
    weights = _frequency_terms(link, ofdm, subcarriers) * amplitudes[None, :]
    bs_rs = np.einsum('kc,cb,cm->kbm', weights, bs_steering, np.conj(rs_steering))

    link = draw_clusters(profile_rs_ue, rng)
    amplitudes = np.sqrt(link.powers * budget.gain_rs_ue) * np.exp(1j * link.phases)
    rs_steering = ura_response(link.azimuth_arrival, link.zenith_arrival, geom_rs)  # C x M
    doppler = mob.doppler_hz * np.cos(np.radians(link.azimuth_departure - mob.motion_azimuth_deg))
    times = np.arange(ofdm.frame_symbols) * ofdm.symbol_duration
    rotation = np.exp(2j * np.pi * times[:, None] * doppler[None, :])  # N x C
    weights = _frequency_terms(link, ofdm, subcarriers) * amplitudes[None, :]
    rs_ue = np.einsum('kc,nc,cm->knm', weights, rotation, rs_steering)
    return ChannelRealization(bs_rs, rs_ue)
