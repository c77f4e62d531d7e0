from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import binomtest, bootstrap, norm

from analysis import coherence_symbols, efficiency_factor
from channel import ArrayGeometry, ChannelRealization, ClusterProfile, LinkBudget, MobilityModel, OfdmNumerology, \
    cascade_grid, complex_gaussian, db_to_linear, gen_geometric_pair, gen_iid_pair, linear_to_db, temporal_correlation
from modem_cds import cds_frame_pipeline, effective_power
from modem_ncds import SUPPORTED_ORDERS, diff_decode_grid, diff_encode, psk_demap, psk_map, reference_indices, \
    zero_decisions
from surface import random_schedule

CHANNEL_MODELS: tuple[str, ...] = ('iid_rayleigh', 'geometric')
SCHEMES: tuple[str, ...] = ('ncds', 'cds')
PHASE_MODES: tuple[str, ...] = ('per_frame', 'per_symbol')
SWEEP_AXES: tuple[str, ...] = ('P_x', 'M', 'B', 'speed', 'order')
EXPERIMENTS: tuple[str, ...] = ('sinr', 'sep')
CONFIDENCE: float = 0.95
MOMENT_BATCH: int = 10_000
# trials between two early-stopping checks, independent of the thread count
STOPPING_CHUNK: int = 16
STATUS_OK: str = 'ok'
STATUS_INFEASIBLE: str = 'infeasible'
CSV_COLUMNS: list[str] = ['metric_name', 'value', 'ci_low', 'ci_high', 'samples', 'B', 'M', 'P_x_dBW', 'speed_kmh',
                          'scheme', 'channel_model', 'seed', 'config_digest', 'P_x_eff_dBW', 'status']
VERBOSE: bool = True


def _log(message: str):
    if VERBOSE:
        print(message)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = 'custom'
    geom_bs: ArrayGeometry = ArrayGeometry(2, 2)
    geom_rs: ArrayGeometry = ArrayGeometry(8, 8)
    budget: LinkBudget = LinkBudget.from_db(-48, -59, -94, 0)
    ofdm: OfdmNumerology = OfdmNumerology()
    mob: MobilityModel = MobilityModel.from_speed(3)
    channel_model: str = 'iid_rayleigh'
    profile_bs_rs: Optional[ClusterProfile] = None
    profile_rs_ue: Optional[ClusterProfile] = None
    order: int = 4
    scheme: str = 'ncds'
    trials: int = 100
    master_seed: int = 0
    phase_mode: str = 'per_frame'
    simulated_subcarriers: Optional[int] = 64
    optimizer_iterations: int = 5
    calibration: float = 1.0
    max_errors: Optional[int] = 100
    min_decisions: int = 10_000
    bootstrap_resamples: int = 1000

    def __post_init__(self):
        if self.channel_model not in CHANNEL_MODELS:
            raise ValueError('Unknown channel model "{}"'.format(self.channel_model))
        if self.scheme not in SCHEMES:
            raise ValueError('Unknown scheme "{}"'.format(self.scheme))
        if self.phase_mode not in PHASE_MODES:
            raise ValueError('Unknown phase mode "{}"'.format(self.phase_mode))
        if self.order not in SUPPORTED_ORDERS:
            raise ValueError('PSK order {} is not supported'.format(self.order))
        if self.trials < 1:
            raise ValueError('At least one trial is required, got {}'.format(self.trials))
        if self.channel_model == 'geometric' and (self.profile_bs_rs is None or self.profile_rs_ue is None):
            raise ValueError('The geometric channel model needs both cluster profiles')
        if self.optimizer_iterations < 1:
            raise ValueError('optimizer_iterations must be at least 1')
        if self.calibration <= 0:
            raise ValueError('calibration must be positive')
        if not 0 <= self.master_seed < 2 ** 64:
            raise ValueError('master_seed must be an unsigned 64-bit integer')

    @property
    def b(self) -> int:
        return self.geom_bs.size

    @property
    def m(self) -> int:
        return self.geom_rs.size

    @property
    def reference_amplitude(self) -> float:
        return self.budget.gain_bs_rs * self.budget.gain_rs_ue * self.budget.tx_power

    def digest(self) -> str:
        text = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(text.encode('utf8')).hexdigest()[:16]

    def subcarriers(self) -> np.ndarray:
        return self.ofdm.subcarrier_indices(self.simulated_subcarriers)


@dataclass(frozen=True)
class MetricRecord:
    metric_name: str
    value: Optional[float]
    ci_low: Optional[float]
    ci_high: Optional[float]
    samples: int
    config_digest: str
    seed: int
    b: int = 0
    m: int = 0
    tx_power_dbw: float = math.nan
    speed_kmh: float = math.nan
    scheme: str = ''
    channel_model: str = ''
    tx_power_eff_dbw: Optional[float] = None
    status: str = STATUS_OK
    # decisions taken on z = 0, resolved to index 0; not part of the CSV row
    zero_decisions: int = 0

    def __post_init__(self):
        if self.value is not None and not self.ci_low <= self.value <= self.ci_high:
            raise ValueError('Interval [{}, {}] does not contain {}'.format(self.ci_low, self.value, self.ci_high))

    @staticmethod
    def of(cfg: ScenarioConfig, metric_name: str, value: Optional[float], interval: Optional[tuple[float, float]],
           samples: int, digest: Optional[str] = None, tx_power_eff: Optional[float] = None,
           status: str = STATUS_OK, zero_decisions: int = 0) -> MetricRecord:
        ci_low, ci_high = (None, None) if interval is None else (min(interval[0], value), max(interval[1], value))
        if tx_power_eff is None and status == STATUS_OK:
            tx_power_eff = cfg.budget.tx_power
        return MetricRecord(metric_name=metric_name, value=value, ci_low=ci_low, ci_high=ci_high, samples=samples,
                            config_digest=digest or cfg.digest(), seed=cfg.master_seed, b=cfg.b, m=cfg.m,
                            tx_power_dbw=cfg.budget.tx_power_dbw, speed_kmh=cfg.mob.speed_kmh, scheme=cfg.scheme,
                            channel_model=cfg.channel_model,
                            tx_power_eff_dbw=None if tx_power_eff is None else linear_to_db(tx_power_eff),
                            status=status, zero_decisions=zero_decisions)

    def row(self) -> dict:
        return {'metric_name': self.metric_name, 'value': self.value, 'ci_low': self.ci_low,
                'ci_high': self.ci_high, 'samples': self.samples, 'B': self.b, 'M': self.m,
                'P_x_dBW': self.tx_power_dbw, 'speed_kmh': self.speed_kmh, 'scheme': self.scheme,
                'channel_model': self.channel_model, 'seed': self.seed, 'config_digest': self.config_digest,
                'P_x_eff_dBW': self.tx_power_eff_dbw, 'status': self.status}


@dataclass
class _Accumulator:
    errors: int = 0
    decisions: int = 0
    zero_decisions: int = 0
    trials: int = 0


def records_to_frame(records: Sequence[MetricRecord]) -> pd.DataFrame:
    return pd.DataFrame([record.row() for record in records], columns=CSV_COLUMNS)


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(0, trial)))


def _bootstrap_rng(master_seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(1,)))


def run_trials(cfg: ScenarioConfig, frame_fn: Callable[[ScenarioConfig, np.random.Generator], object],
               trials: Sequence[int], threads: int = 1) -> list:
    """
    Evaluate frame_fn once per trial index with its own RNG stream. Results come back in trial order.
    """
    def work(trial: int):
        return frame_fn(cfg, trial_rng(cfg.master_seed, trial))

    if threads <= 1:
        return [work(trial) for trial in trials]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, trials))


def draw_channel(cfg: ScenarioConfig, rng: np.random.Generator) -> ChannelRealization:
    subcarriers = cfg.subcarriers()
    if cfg.channel_model == 'geometric':
        return gen_geometric_pair(cfg.geom_bs, cfg.geom_rs, cfg.budget, cfg.ofdm, cfg.mob, cfg.profile_bs_rs,
                                  cfg.profile_rs_ue, rng, subcarriers)
    return gen_iid_pair(cfg.geom_bs, cfg.geom_rs, cfg.budget, cfg.ofdm, cfg.mob, rng, subcarriers)


@dataclass(frozen=True)
class NcdsFrame:
    transmitted: np.ndarray
    decided: np.ndarray
    squared_error: float
    zero_decisions: int = 0

    @property
    def errors(self) -> int:
        return int(np.count_nonzero(self.transmitted != self.decided))

    @property
    def decisions(self) -> int:
        return int(self.transmitted.size)


def ncds_frame(cfg: ScenarioConfig, rng: np.random.Generator) -> NcdsFrame:
    """
    One frame of the non-coherent link: differential PSK through the RS with random phases.
    """
    channel = draw_channel(cfg, rng)
    phases = random_schedule(cfg.m, cfg.ofdm.frame_symbols, rng, static=cfg.phase_mode == 'per_frame')
    indices = reference_indices(rng.integers(0, cfg.order, (channel.subcarriers, cfg.ofdm.frame_symbols)))
    s = psk_map(indices, cfg.order)
    x = diff_encode(s, cfg.budget.tx_power).values
    q = cascade_grid(channel, phases)
    y = q * x[..., None]
    y = y + complex_gaussian(rng, y.shape, cfg.budget.noise_power)
    z = diff_decode_grid(y, cfg.m).values
    squared_error = float(np.sum(np.abs(z - cfg.reference_amplitude * s.values[:, 1:]) ** 2))
    return NcdsFrame(indices[:, 1:], psk_demap(z, cfg.order), squared_error, zero_decisions(z))


def cds_frame(cfg: ScenarioConfig, rng: np.random.Generator):
    return cds_frame_pipeline(cfg, draw_channel(cfg, rng), rng)


def _check_trials(cfg: ScenarioConfig):
    if cfg.trials < 1:
        raise ValueError('At least one trial is required')
    if cfg.ofdm.frame_symbols < 2:
        raise ValueError('Differential decoding needs at least two symbols per frame')


def run_sinr_ncds(cfg: ScenarioConfig, threads: int = 1, digest: Optional[str] = None) -> MetricRecord:
    """
    Empirical SINR of the decision variable, reference power over the mean squared error with respect
    to the symbol scaled by sigma_h^2 sigma_g^2 P_x, with a bootstrap interval over frames.
    """
    if cfg.scheme != 'ncds':
        raise ValueError('SINR is measured on the non-coherent scheme only')
    _check_trials(cfg)
    _log('Experiment with SINR: {} - B={} M={} P_x={:.1f} dBW'.format(cfg.name, cfg.b, cfg.m,
                                                                      cfg.budget.tx_power_dbw))
    frames = run_trials(cfg, ncds_frame, range(cfg.trials), threads)
    pairs = frames[0].decisions
    frame_mse = np.array([frame.squared_error / pairs for frame in frames])
    reference = cfg.reference_amplitude ** 2
    value = reference / float(np.mean(frame_mse))
    interval = (value, value)
    if len(frame_mse) > 1 and np.ptp(frame_mse) > 0:
        result = bootstrap((frame_mse,), lambda sample, axis: reference / np.mean(sample, axis=axis),
                           n_resamples=cfg.bootstrap_resamples, confidence_level=CONFIDENCE, method='percentile',
                           vectorized=True, random_state=_bootstrap_rng(cfg.master_seed))
        interval = (float(result.confidence_interval.low), float(result.confidence_interval.high))
    _log('SINR: {:.4f} ({:.2f} dB)'.format(value, linear_to_db(value)))
    return MetricRecord.of(cfg, 'sinr_ncds', value, interval, pairs * len(frames), digest)


def draw_interference_terms(b: int, m: int, sigma_h2: float, sigma_g2: float, sigma_v2: float, tx_power: float,
                            order: int, rng: np.random.Generator, size: int,
                            lag_correlation: float = 1.0) -> dict[str, np.ndarray]:
    """
    Independent draws of a symbol pair through IID Rayleigh links with random RS phases, split into the
    transmitted symbol s and the four terms of the decision variable.
    """
    h = complex_gaussian(rng, (size, b, m), sigma_h2)
    g_prev = complex_gaussian(rng, (size, m), sigma_g2)
    g_curr = lag_correlation * g_prev + np.sqrt(1 - lag_correlation ** 2) * complex_gaussian(rng, (size, m),
                                                                                            sigma_g2)
    psi = np.exp(1j * rng.uniform(0, 2 * np.pi, (size, m)))
    q_prev = np.einsum('sbm,sm->sb', h, psi * g_prev)
    q_curr = np.einsum('sbm,sm->sb', h, psi * g_curr)
    s = psk_map(rng.integers(0, order, size), order).values
    x_prev = np.sqrt(tx_power) * psk_map(rng.integers(0, order, size), order).values
    x_curr = x_prev * s
    v_prev = complex_gaussian(rng, (size, b), sigma_v2)
    v_curr = complex_gaussian(rng, (size, b), sigma_v2)
    return {'s': s,
            'i1': np.conj(x_prev) * x_curr * np.sum(np.conj(q_prev) * q_curr, axis=1),
            'i2': np.conj(x_prev) * np.sum(np.conj(q_prev) * v_curr, axis=1),
            'i3': x_curr * np.sum(np.conj(v_prev) * q_curr, axis=1),
            'i4': np.sum(np.conj(v_prev) * v_curr, axis=1)}


MOMENT_NAMES: tuple[str, ...] = ('E[s*I1]', 'E|I1|^2', 'E|I2|^2', 'E|I3|^2', 'E|I4|^2')


def _moment_samples(terms: dict[str, np.ndarray], tx_power: float) -> dict[str, np.ndarray]:
    # the cross moment carries one more power of P_x, matching the reference amplitude sigma_h^2 sigma_g^2
    return {'E[s*I1]': tx_power * np.real(np.conj(terms['s']) * terms['i1']),
            'E|I1|^2': np.abs(terms['i1']) ** 2,
            'E|I2|^2': np.abs(terms['i2']) ** 2,
            'E|I3|^2': np.abs(terms['i3']) ** 2,
            'E|I4|^2': np.abs(terms['i4']) ** 2}


def run_moment_check(cfg: ScenarioConfig, threads: int = 1, batch: int = MOMENT_BATCH,
                     digest: Optional[str] = None) -> list[MetricRecord]:
    """
    Monte Carlo estimates of the five moments over trials x batch independent draws.
    """
    if cfg.channel_model != 'iid_rayleigh':
        raise ValueError('The moment check assumes the IID Rayleigh channel model')
    lag = float(temporal_correlation(cfg.mob, cfg.ofdm)[0, 1])
    budget = cfg.budget
    _log('Experiment with moments: {} - B={} M={}'.format(cfg.name, cfg.b, cfg.m))

    def moment_batch(config: ScenarioConfig, rng: np.random.Generator) -> dict[str, tuple[float, float]]:
        terms = draw_interference_terms(config.b, config.m, budget.gain_bs_rs, budget.gain_rs_ue,
                                        budget.noise_power, budget.tx_power, config.order, rng, batch, lag)
        return {name: (float(np.sum(values)), float(np.sum(values ** 2)))
                for name, values in _moment_samples(terms, budget.tx_power).items()}

    batches = run_trials(cfg, moment_batch, range(cfg.trials), threads)
    samples = batch * len(batches)
    z = norm.ppf(0.5 + CONFIDENCE / 2)
    records = []
    for name in MOMENT_NAMES:
        total = sum(result[name][0] for result in batches)
        total_squares = sum(result[name][1] for result in batches)
        mean = total / samples
        std = math.sqrt(max(total_squares / samples - mean ** 2, 0))
        half_width = z * std / math.sqrt(samples)
        records.append(MetricRecord.of(cfg, name, mean, (mean - half_width, mean + half_width), samples, digest))
    return records


def _stop(acc: _Accumulator, cfg: ScenarioConfig) -> bool:
    return cfg.max_errors is not None and acc.errors >= cfg.max_errors and acc.decisions >= cfg.min_decisions


def cds_feasibility(cfg: ScenarioConfig) -> float:
    """
    Efficiency factor of the coherent scheme for this scenario, zero when the sounding does not fit.
    """
    coherence = coherence_symbols(cfg.mob.doppler_hz, cfg.ofdm.subcarrier_spacing, cfg.ofdm.subcarriers,
                                  cfg.ofdm.cp_length, cfg.calibration)
    return efficiency_factor(cfg.m, coherence)


def run_sep(cfg: ScenarioConfig, threads: int = 1, digest: Optional[str] = None) -> MetricRecord:
    """
    Symbol error probability with a Wilson interval. Trials run in fixed chunks and stop after the first
    trial at which both the error and the decision targets are met.
    """
    _check_trials(cfg)
    _log('Experiment with SEP: {} - {} B={} M={} P_x={:.1f} dBW'.format(cfg.name, cfg.scheme, cfg.b, cfg.m,
                                                                        cfg.budget.tx_power_dbw))
    tx_power_eff = cfg.budget.tx_power
    if cfg.scheme == 'cds':
        efficiency = cds_feasibility(cfg)
        tx_power_eff = effective_power(cfg.budget.tx_power, efficiency)
        if tx_power_eff is None:
            _log('SEP: infeasible (M={} does not fit the coherence time)'.format(cfg.m))
            return MetricRecord.of(cfg, 'sep', None, None, 0, digest, status=STATUS_INFEASIBLE)
    frame_fn = cds_frame if cfg.scheme == 'cds' else ncds_frame
    acc = _Accumulator()
    start = 0
    while start < cfg.trials and not _stop(acc, cfg):
        chunk = range(start, min(start + STOPPING_CHUNK, cfg.trials))
        for frame in run_trials(cfg, frame_fn, chunk, threads):
            acc.errors += frame.errors
            acc.decisions += frame.decisions
            acc.zero_decisions += frame.zero_decisions
            acc.trials += 1
            if _stop(acc, cfg):
                break
        start = chunk.stop
    value = acc.errors / acc.decisions
    interval = binomtest(acc.errors, acc.decisions).proportion_ci(confidence_level=CONFIDENCE, method='wilson')
    _log('SEP: {:.3e} ({} errors / {} decisions, {} trials)'.format(value, acc.errors, acc.decisions, acc.trials))
    if acc.zero_decisions:
        _log('SEP: {} decisions on a zero decision variable were mapped to index 0'.format(acc.zero_decisions))
    return MetricRecord.of(cfg, 'sep', value, (interval.low, interval.high), acc.decisions, digest,
                           tx_power_eff=tx_power_eff, zero_decisions=acc.zero_decisions)


def apply_axis(cfg: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    """
    Scenario with one sweepable scalar replaced. P_x is given in dBW and speed in km/h.
    """
    if axis == 'P_x':
        return replace(cfg, budget=replace(cfg.budget, tx_power=db_to_linear(value)))
    if axis == 'M':
        return replace(cfg, geom_rs=ArrayGeometry.square(int(value), cfg.geom_rs.spacing_h))
    if axis == 'B':
        return replace(cfg, geom_bs=ArrayGeometry.square(int(value), cfg.geom_bs.spacing_h))
    if axis == 'speed':
        return replace(cfg, mob=MobilityModel.from_speed(value, cfg.mob.carrier_hz, cfg.mob.motion_azimuth_deg))
    if axis == 'order':
        return replace(cfg, order=int(value))
    raise ValueError('Axis "{}" is not sweepable, use one of {}'.format(axis, SWEEP_AXES))


def sweep(cfg_template: ScenarioConfig, axis: str, values: Sequence[float], experiment: str = 'sinr',
          threads: int = 1, digest: Optional[str] = None) -> list[MetricRecord]:
    """
    One record per value of the swept axis, all tagged with the digest of the template (or the given one).
    """
    if axis not in SWEEP_AXES:
        raise ValueError('Axis "{}" is not sweepable, use one of {}'.format(axis, SWEEP_AXES))
    if experiment not in EXPERIMENTS:
        raise ValueError('Unknown experiment "{}"'.format(experiment))
    digest = digest or cfg_template.digest()
    run = run_sinr_ncds if experiment == 'sinr' else run_sep
    records = []
    for i, value in enumerate(values):
        _log('\nStep {}/{} -> {} = {}'.format(i + 1, len(values), axis, value))
        records.append(run(apply_axis(cfg_template, axis, value), threads, digest))
    return records
