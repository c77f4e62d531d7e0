from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Sequence

import cpuinfo
import numpy as np
import pandas as pd
import toml

import engine
from analysis import REFERENCE_EFFICIENCY_TABLE, TABLE_CALIBRATION, TABLE_ELEMENTS, TABLE_SPEEDS_KMH, \
    coherence_symbols, complexity_counts, efficiency_factor, efficiency_table, moments_closed_form, \
    sinr_from_moments, sinr_ncds, sinr_ncds_high_power
from channel import ArrayGeometry, ChannelError, ChannelRealization, ClusterProfile, LinkBudget, MobilityModel, \
    OfdmNumerology, cascade, doppler_autocorr
from engine import STATUS_INFEASIBLE, MetricRecord, ScenarioConfig, records_to_frame, sweep
from modem_cds import sound_cascaded
from modem_ncds import SUPPORTED_ORDERS, decide, diff_decode, diff_encode, psk_map, reference_indices
from results.analysis import PATH as ANALYSIS_RESULTS_PATH
from results.efficiency import PATH as EFFICIENCY_RESULTS_PATH
from results.sep import PATH as SEP_RESULTS_PATH
from results.sinr import PATH as SINR_RESULTS_PATH
from scenarios import Table2
from surface import is_orthogonal, training_schedule

VERSION: str = '0.1.0'
DEFAULT_TRIALS: int = 100
EXIT_OK: int = 0
EXIT_VALIDATION: int = 1
EXIT_INFEASIBLE: int = 2
EXIT_USAGE: int = 64
COMMANDS: tuple[str, ...] = ('sinr', 'sep', 'efficiency', 'analysis', 'validate')
EQUATIONS: tuple[str, ...] = ('sinr', 'moments', 'coherence', 'efficiency', 'complexity')
SCHEMA: dict[str, set[str]] = {
    'scenario': {'name', 'channel_model', 'scheme', 'order', 'trials', 'seed', 'phase_mode', 'simulated_subcarriers'},
    'bs': {'count_h', 'count_v', 'spacing_h', 'spacing_v', 'position'},
    'rs': {'count_h', 'count_v', 'spacing_h', 'spacing_v', 'position'},
    'ue': {'position', 'speed_kmh', 'motion_azimuth_deg'},
    'link': {'l_alpha_db', 'l_beta_db', 'noise_dbw', 'tx_power_dbw'},
    'ofdm': {'carrier_hz', 'subcarrier_spacing_hz', 'subcarriers', 'cp_length', 'frame_symbols'},
    'clusters': {'count', 'delay_spread_s', 'asd', 'asa', 'zsd', 'zsa'},
    'cds': {'optimizer_iterations', 'calibration'},
    'stopping': {'max_errors', 'min_decisions', 'bootstrap_resamples'},
}


class ConfigError(ValueError):
    """
    Raised when a scenario file cannot be turned into a valid ScenarioConfig.
    """


@dataclass(frozen=True)
class RunManifest:
    config_path: str
    config: dict
    output_path: str
    subcommand: str
    timestamp: str
    tool_version: str
    config_digest: str
    host: str
    defaults_applied: list[str]


def _check_keys(document: dict, strict: bool):
    if not strict:
        return
    for section, values in document.items():
        if section not in SCHEMA:
            raise ConfigError('Unknown section [{}]'.format(section))
        if not isinstance(values, dict):
            raise ConfigError('[{}] must be a table'.format(section))
        unknown = set(values) - SCHEMA[section]
        if unknown:
            raise ConfigError('Unknown key(s) in [{}]: {}'.format(section, ', '.join(sorted(unknown))))


def load_config(path, strict: bool = True) -> tuple[ScenarioConfig, list[str]]:
    """
    Read a TOML scenario. Gains and powers are given in dB/dBW and converted to linear values.
    Returns the configuration and the list of keys that fell back to their default.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError('Configuration file {} does not exist'.format(path))
    try:
        document = toml.load(path)
    except toml.TomlDecodeError as error:
        raise ConfigError('Cannot parse {}: {}'.format(path, error)) from error
    _check_keys(document, strict)
    defaults: list[str] = []

    def get(section: str, key: str, default):
        value = document.get(section, {}).get(key)
        if value is None:
            defaults.append('{}.{}'.format(section, key))
            return default
        return value

    try:
        geom_bs = ArrayGeometry(get('bs', 'count_h', 2), get('bs', 'count_v', 2),
                                get('bs', 'spacing_h', 0.5), get('bs', 'spacing_v', 0.5))
        geom_rs = ArrayGeometry(get('rs', 'count_h', 8), get('rs', 'count_v', 8),
                                get('rs', 'spacing_h', 0.5), get('rs', 'spacing_v', 0.5))
        budget = LinkBudget.from_db(get('link', 'l_alpha_db', -48.0), get('link', 'l_beta_db', -59.0),
                                    get('link', 'noise_dbw', -94.0), get('link', 'tx_power_dbw', 0.0))
        ofdm = OfdmNumerology(get('ofdm', 'subcarriers', 1024), get('ofdm', 'cp_length', 72),
                              float(get('ofdm', 'subcarrier_spacing_hz', 30e3)), get('ofdm', 'frame_symbols', 140))
        mob = MobilityModel.from_speed(get('ue', 'speed_kmh', 3.0), float(get('ofdm', 'carrier_hz', 3.5e9)),
                                       get('ue', 'motion_azimuth_deg', 0.0))
        channel_model = get('scenario', 'channel_model', 'iid_rayleigh')
        profile_bs_rs = profile_rs_ue = None
        if channel_model == 'geometric':
            bs = get('bs', 'position', [0.0, 0.0, 3.0])
            rs = get('rs', 'position', [3.0, 0.0, 3.0])
            ue = get('ue', 'position', [6.0, 1.0, 1.0])
            spreads = (float(get('clusters', 'delay_spread_s', 1.5e-4)), get('clusters', 'asd', 7.0),
                       get('clusters', 'asa', 12.0), get('clusters', 'zsd', 25.0), get('clusters', 'zsa', 30.0))
            count = get('clusters', 'count', 20)
            profile_bs_rs = ClusterProfile.from_positions(rs, bs, *spreads, cluster_count=count)
            profile_rs_ue = ClusterProfile.from_positions(ue, rs, *spreads, cluster_count=count)
        cfg = ScenarioConfig(name=get('scenario', 'name', path.stem), geom_bs=geom_bs, geom_rs=geom_rs,
                             budget=budget, ofdm=ofdm, mob=mob, channel_model=channel_model,
                             profile_bs_rs=profile_bs_rs, profile_rs_ue=profile_rs_ue,
                             order=get('scenario', 'order', 4), scheme=get('scenario', 'scheme', 'ncds'),
                             trials=get('scenario', 'trials', DEFAULT_TRIALS),
                             master_seed=get('scenario', 'seed', 0),
                             phase_mode=get('scenario', 'phase_mode', 'per_frame'),
                             simulated_subcarriers=get('scenario', 'simulated_subcarriers', 64),
                             optimizer_iterations=get('cds', 'optimizer_iterations', 5),
                             calibration=float(get('cds', 'calibration', 1.0)),
                             max_errors=get('stopping', 'max_errors', 100),
                             min_decisions=get('stopping', 'min_decisions', 10_000),
                             bootstrap_resamples=get('stopping', 'bootstrap_resamples', 1000))
    except ChannelError as error:
        raise ConfigError(str(error)) from error
    except (TypeError, ValueError) as error:
        raise ConfigError('Invalid value in {}: {}'.format(path, error)) from error
    return cfg, defaults


def parse_config(path, strict: bool = True) -> ScenarioConfig:
    return load_config(path, strict)[0]


def write_csv(frame: pd.DataFrame, path: Path, float_format: str = '%.10g'):
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=float_format, na_rep=STATUS_INFEASIBLE, lineterminator='\n')


def write_manifest(path: Path, subcommand: str, config_path: Optional[Path], cfg: Optional[ScenarioConfig],
                   defaults: Sequence[str] = ()) -> Path:
    """
    JSON manifest stored next to the CSV output.
    """
    manifest = RunManifest(config_path='' if config_path is None else str(config_path),
                           config={} if cfg is None else json.loads(json.dumps(asdict(cfg), default=str)),
                           output_path=str(path), subcommand=subcommand,
                           timestamp=datetime.now(timezone.utc).isoformat(), tool_version=VERSION,
                           config_digest='' if cfg is None else cfg.digest(),
                           host=cpuinfo.get_cpu_info().get('brand_raw', 'unknown'),
                           defaults_applied=list(defaults))
    manifest_path = path.with_suffix('.json')
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    with open(manifest_path, 'w', encoding='utf8') as file:
        json.dump(asdict(manifest), file, indent=2, sort_keys=True)
    return manifest_path


def _floats(text: str) -> list[float]:
    return [float(value) for value in text.split(',') if value.strip()]


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument('-c', '--config', type=Path, default=Table2.file_name, help='scenario TOML file')
    parser.add_argument('-o', '--out', type=Path, default=None, help='output CSV path')
    parser.add_argument('-s', '--seed', type=int, default=None, help='master seed (overrides the file)')
    parser.add_argument('-t', '--threads', type=int, default=1, help='worker threads for the trials')
    parser.add_argument('--calibration', type=float, default=None, help='coherence time calibration factor')
    parser.add_argument('-q', '--quiet', action='store_true', help='silence progress prints')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='ris-ncds', description='RS-empowered MIMO-OFDM uplink simulator',
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    commands = parser.add_subparsers(dest='command')

    sinr = commands.add_parser('sinr', help='empirical vs closed-form SINR sweep',
                               formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_common(sinr)
    sinr.add_argument('-a', '--axis', default='P_x', choices=engine.SWEEP_AXES)
    sinr.add_argument('-v', '--values', type=_floats, default=[-10.0, 0.0, 10.0, 20.0])

    sep = commands.add_parser('sep', help='SEP comparison between NCDS and CDS',
                              formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_common(sep)
    sep.add_argument('-a', '--axis', default='P_x', choices=engine.SWEEP_AXES)
    sep.add_argument('-v', '--values', type=_floats, default=[-10.0, 0.0, 10.0, 20.0])
    sep.add_argument('--schemes', default='ncds,cds', help='comma separated schemes')

    efficiency = commands.add_parser('efficiency', help='efficiency factor of the coherent scheme',
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_common(efficiency)
    efficiency.add_argument('--speeds', type=_floats, default=[float(v) for v in TABLE_SPEEDS_KMH])
    efficiency.add_argument('--elements', type=_floats, default=[float(m) for m in TABLE_ELEMENTS])

    analysis = commands.add_parser('analysis', help='closed-form results',
                                   formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_common(analysis)
    analysis.add_argument('--eq', default='sinr', choices=EQUATIONS)
    analysis.add_argument('--B', dest='b', type=int, default=None, help='BS antennas')
    analysis.add_argument('--M', dest='m', type=int, default=None, help='RS elements')
    analysis.add_argument('--K', dest='k', type=int, default=None, help='subcarriers')
    analysis.add_argument('--iterations', type=int, default=5, help='optimiser iterations R_t')
    analysis.add_argument('--px-dbw', type=float, default=None, help='transmit power in dBW')
    analysis.add_argument('--speed', type=float, default=None, help='UE speed in km/h')
    analysis.add_argument('--highpower', action='store_true', help='high transmit power limit')

    validate = commands.add_parser('validate', help='run the invariant suite',
                                   formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    validate.add_argument('-q', '--quiet', action='store_true')
    return parser


def _load(options) -> tuple[ScenarioConfig, list[str]]:
    cfg, defaults = load_config(options.config)
    if options.seed is not None:
        cfg = replace(cfg, master_seed=options.seed)
    if options.calibration is not None:
        cfg = replace(cfg, calibration=options.calibration)
    return cfg, defaults


def _finish(frame: pd.DataFrame, path: Path, command: str, options, cfg, defaults, float_format: str = '%.10g'):
    write_csv(frame, path, float_format)
    write_manifest(path, command, getattr(options, 'config', None), cfg, defaults)
    print('Results written to {}'.format(path))


def run_sinr(options) -> int:
    cfg, defaults = _load(options)
    cfg = replace(cfg, scheme='ncds')
    records = sweep(cfg, options.axis, options.values, 'sinr', options.threads)
    digest = cfg.digest()
    closed_form = []
    for value in options.values:
        point = engine.apply_axis(cfg, options.axis, value)
        budget = point.budget
        rho = sinr_ncds(point.b, point.m, budget.gain_bs_rs, budget.gain_rs_ue, budget.noise_power, budget.tx_power)
        closed_form.append(MetricRecord.of(point, 'sinr_closed_form', rho, (rho, rho), 0, digest))
    path = options.out or SINR_RESULTS_PATH / '{}.csv'.format(cfg.name)
    _finish(records_to_frame(records + closed_form), path, 'sinr', options, cfg, defaults)
    return EXIT_OK


def run_sep(options) -> int:
    cfg, defaults = _load(options)
    records = []
    for scheme in [s.strip() for s in options.schemes.split(',') if s.strip()]:
        records.extend(sweep(replace(cfg, scheme=scheme), options.axis, options.values, 'sep', options.threads,
                             cfg.digest()))
    path = options.out or SEP_RESULTS_PATH / '{}.csv'.format(cfg.name)
    _finish(records_to_frame(records), path, 'sep', options, cfg, defaults)
    if records and all(record.status == STATUS_INFEASIBLE for record in records):
        return EXIT_INFEASIBLE
    return EXIT_OK


def run_efficiency(options) -> int:
    cfg, defaults = _load(options)
    calibration = cfg.calibration if options.calibration is None else options.calibration
    table = efficiency_table(options.speeds, [int(m) for m in options.elements], calibration, cfg.ofdm,
                             cfg.mob.carrier_hz)
    print(table.to_string(index=False, float_format='{:.4f}'.format))
    path = options.out or EFFICIENCY_RESULTS_PATH / 'efficiency.csv'
    _finish(table, path, 'efficiency', options, cfg, defaults, '%.4f')
    if (table.drop(columns='M') == 0).all().all():
        return EXIT_INFEASIBLE
    return EXIT_OK


def _format_quantity(value) -> str:
    if isinstance(value, int):
        return str(value)
    return '{:.4f}'.format(value) if value == 0 or abs(value) >= 1e-3 else '{:.4e}'.format(value)


def run_analysis(options) -> int:
    cfg, defaults = _load(options)
    if options.px_dbw is not None:
        cfg = engine.apply_axis(cfg, 'P_x', options.px_dbw)
    if options.speed is not None:
        cfg = engine.apply_axis(cfg, 'speed', options.speed)
    if options.b is not None:
        cfg = engine.apply_axis(cfg, 'B', options.b)
    if options.m is not None:
        cfg = engine.apply_axis(cfg, 'M', options.m)
    b, m, budget = cfg.b, cfg.m, cfg.budget
    k = options.k or cfg.ofdm.subcarriers
    coherence = coherence_symbols(cfg.mob.doppler_hz, cfg.ofdm.subcarrier_spacing, cfg.ofdm.subcarriers,
                                  cfg.ofdm.cp_length, cfg.calibration)
    if options.eq == 'sinr':
        if options.highpower:
            rows = {'sinr_high_power': sinr_ncds_high_power(b, m)}
        else:
            rows = {'sinr_ncds': sinr_ncds(b, m, budget.gain_bs_rs, budget.gain_rs_ue, budget.noise_power,
                                           budget.tx_power)}
    elif options.eq == 'moments':
        rows = asdict(moments_closed_form(b, m, budget.gain_bs_rs, budget.gain_rs_ue, budget.noise_power,
                                          budget.tx_power))
    elif options.eq == 'coherence':
        rows = {'coherence_symbols': coherence}
    elif options.eq == 'efficiency':
        rows = {'efficiency_factor': efficiency_factor(m, coherence)}
    else:
        rows = asdict(complexity_counts(b, m, k, options.iterations))
    for name, value in rows.items():
        print('{} = {}'.format(name, _format_quantity(value)))
    frame = pd.DataFrame({'quantity': list(rows), 'value': list(rows.values()), 'B': b, 'M': m, 'K': k,
                          'P_x_dBW': budget.tx_power_dbw, 'speed_kmh': cfg.mob.speed_kmh,
                          'calibration': cfg.calibration})
    path = options.out or ANALYSIS_RESULTS_PATH / '{}.csv'.format(options.eq)
    _finish(frame, path, 'analysis', options, cfg, defaults)
    return EXIT_OK


def _check_efficiency_table() -> bool:
    table = efficiency_table(TABLE_SPEEDS_KMH, TABLE_ELEMENTS, TABLE_CALIBRATION)
    for _, row in table.iterrows():
        expected = np.array(REFERENCE_EFFICIENCY_TABLE[int(row['M'])])
        if not np.allclose(row.drop('M').to_numpy(dtype=float), expected, rtol=0, atol=0.002):
            return False
    return True


def _check_complexity() -> bool:
    rng = np.random.default_rng(0)
    for b, m, k, r in rng.integers(1, 1000, (100, 4)).tolist():
        counts = complexity_counts(b, m, k, r)
        if (counts.cds_products, counts.ncds_products, counts.cds_opt_order) != \
                (b * k, (b + 1) * (k - 1), r * (b * b * b + m) * k):
            return False
    return True


def _check_sinr_identity() -> bool:
    rng = np.random.default_rng(1)
    for _ in range(1000):
        b, m = rng.integers(1, 128, 2).tolist()
        h2, g2, v2, p = 10 ** rng.uniform(-6, 1, 4)
        expected = sinr_ncds(b, m, h2, g2, v2, p)
        rebuilt = sinr_from_moments(moments_closed_form(b, m, h2, g2, v2, p), b, m, h2, g2, p)
        if not math.isclose(expected, rebuilt, rel_tol=1e-9):
            return False
    return True


def _check_doppler_root() -> bool:
    ofdm = OfdmNumerology()
    first_root = 2.404825557695773
    doppler = first_root / (2 * np.pi * ofdm.symbol_duration)
    return abs(doppler_autocorr(1, MobilityModel(doppler), ofdm)) < 1e-6 and doppler_autocorr(0, MobilityModel(doppler),
                                                                                          ofdm) == 1.0


def _check_ncds_loopback() -> bool:
    rng = np.random.default_rng(2)
    for order in SUPPORTED_ORDERS:
        indices = reference_indices(rng.integers(0, order, (8, 64)))
        x = diff_encode(psk_map(indices, order), 2.0).values
        for k in range(indices.shape[0]):
            for n in range(1, indices.shape[1]):
                if decide(diff_decode(x[k, n - 1:n], x[k, n:n + 1], 1, 1), order) != indices[k, n]:
                    return False
    return True


def _check_sounding() -> bool:
    rng = np.random.default_rng(3)
    m = 8
    truth = rng.standard_normal((4, 2, m)) + 1j * rng.standard_normal((4, 2, m))
    training = training_schedule(m)
    estimate = sound_cascaded(truth @ training.coefficients.T, training, 1.0)
    return is_orthogonal(training) and np.allclose(estimate.per_element, truth, rtol=1e-10, atol=1e-12)


def _check_cascade() -> bool:
    rng = np.random.default_rng(4)
    bs_rs = rng.standard_normal((1, 2, 3)) + 1j * rng.standard_normal((1, 2, 3))
    rs_ue = rng.standard_normal((1, 1, 3)) + 1j * rng.standard_normal((1, 1, 3))
    psi = np.exp(1j * rng.uniform(0, 2 * np.pi, (1, 3)))
    expected = np.zeros(2, dtype=complex)
    for b in range(2):
        for m in range(3):
            expected[b] += psi[0, m] * bs_rs[0, b, m] * rs_ue[0, 0, m]
    return np.allclose(cascade(ChannelRealization(bs_rs, rs_ue), psi, 0, 0), expected, rtol=1e-12, atol=0)


VALIDATION_CHECKS: dict[str, Callable[[], bool]] = {
    'efficiency table': _check_efficiency_table,
    'complexity counts': _check_complexity,
    'sinr from moments': _check_sinr_identity,
    'doppler first zero': _check_doppler_root,
    'ncds loopback': _check_ncds_loopback,
    'noise-free sounding': _check_sounding,
    'cascade oracle': _check_cascade,
}


def run_validate(options) -> int:
    failures = 0
    for name, check in VALIDATION_CHECKS.items():
        passed = check()
        failures += 0 if passed else 1
        print('{:<24} {}'.format(name, 'PASS' if passed else 'FAIL'))
    return EXIT_OK if failures == 0 else EXIT_VALIDATION


HANDLERS: dict[str, Callable] = {'sinr': run_sinr, 'sep': run_sep, 'efficiency': run_efficiency,
                                 'analysis': run_analysis, 'validate': run_validate}


def subcommand_dispatch(argv: Sequence[str]) -> int:
    parser = build_parser()
    argv = list(argv)
    if not argv or argv[0] not in COMMANDS:
        parser.print_usage()
        return EXIT_USAGE
    try:
        options = parser.parse_args(argv)
    except SystemExit as error:
        return EXIT_OK if error.code == 0 else EXIT_USAGE
    engine.VERBOSE = not options.quiet
    try:
        return HANDLERS[options.command](options)
    except ValueError as error:
        print('Configuration error: {}'.format(error))
        return EXIT_VALIDATION


def main(argv: Optional[Sequence[str]] = None) -> int:
    return subcommand_dispatch(sys.argv[1:] if argv is None else argv)
