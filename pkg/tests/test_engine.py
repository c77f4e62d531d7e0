from dataclasses import replace

import numpy as np
import pytest

import engine
from analysis import moments_closed_form, sinr_ncds
from channel import ArrayGeometry, LinkBudget, MobilityModel, OfdmNumerology
from cli import parse_config
from engine import MOMENT_NAMES, STATUS_INFEASIBLE, MetricRecord, ScenarioConfig, apply_axis, records_to_frame, \
    run_moment_check, run_sep, run_sinr_ncds, sweep, trial_rng
from modem_ncds import DecisionGrid
from scenarios import HighAngularSpread, LowAngularSpread


def _small(**changes) -> ScenarioConfig:
    base = ScenarioConfig(geom_rs=ArrayGeometry(4, 4), ofdm=OfdmNumerology(frame_symbols=20), trials=8,
                          simulated_subcarriers=8, bootstrap_resamples=200)
    return replace(base, **changes)


class TestConfig:

    def test_digest_is_stable_and_sensitive(self):
        assert len(_small().digest()) == 16
        assert _small().digest() == _small().digest()
        assert _small().digest() != _small(master_seed=1).digest()

    def test_invalid_values(self):
        with pytest.raises(ValueError):
            _small(scheme='dpsk')
        with pytest.raises(ValueError):
            _small(trials=0)
        with pytest.raises(ValueError):
            _small(channel_model='geometric')
        with pytest.raises(ValueError):
            _small(master_seed=-1)

    def test_apply_axis(self):
        cfg = _small()
        assert apply_axis(cfg, 'P_x', 10).budget.tx_power == pytest.approx(10.0)
        assert apply_axis(cfg, 'M', 256).m == 256
        assert apply_axis(cfg, 'B', 16).b == 16
        assert apply_axis(cfg, 'speed', 40).mob.speed_kmh == pytest.approx(40)
        with pytest.raises(ValueError):
            apply_axis(cfg, 'K', 10)

    def test_trial_streams_are_independent(self):
        assert trial_rng(0, 0).integers(0, 2 ** 32) != trial_rng(0, 1).integers(0, 2 ** 32)
        assert trial_rng(3, 5).integers(0, 2 ** 32) == trial_rng(3, 5).integers(0, 2 ** 32)

    def test_record_interval_must_contain_value(self):
        with pytest.raises(ValueError):
            MetricRecord('sep', 0.5, 0.6, 0.7, 10, 'digest', 0)


class TestSinr:

    def test_thread_count_does_not_change_results(self):
        cfg = _small()
        assert run_sinr_ncds(cfg, threads=1) == run_sinr_ncds(cfg, threads=4)

    def test_interval_contains_estimate(self):
        record = run_sinr_ncds(_small())
        assert record.ci_low <= record.value <= record.ci_high
        assert record.samples == 8 * 8 * 19

    def test_rejects_coherent_scheme(self):
        with pytest.raises(ValueError):
            run_sinr_ncds(_small(scheme='cds'))

    @pytest.mark.slow
    def test_high_power_limit(self):
        cfg = ScenarioConfig(budget=LinkBudget(1.0, 1.0, 1e-18, 1.0), ofdm=OfdmNumerology(frame_symbols=14),
                             simulated_subcarriers=256, bootstrap_resamples=200)
        record = run_sinr_ncds(cfg)
        assert 10 * np.log10(record.value / (256 / 69)) == pytest.approx(0, abs=0.2)

    @pytest.mark.slow
    @pytest.mark.parametrize('tx_power_dbw', [-10, 0, 10, 20])
    def test_tracks_closed_form(self, tx_power_dbw):
        cfg = ScenarioConfig(ofdm=OfdmNumerology(frame_symbols=14), simulated_subcarriers=256,
                             bootstrap_resamples=200)
        cfg = apply_axis(cfg, 'P_x', tx_power_dbw)
        budget = cfg.budget
        expected = sinr_ncds(cfg.b, cfg.m, budget.gain_bs_rs, budget.gain_rs_ue, budget.noise_power, budget.tx_power)
        record = run_sinr_ncds(cfg, threads=4)
        assert record.samples >= 10 ** 5
        assert 10 * np.log10(record.value / expected) == pytest.approx(0, abs=0.2)


class TestMoments:

    @pytest.mark.slow
    @pytest.mark.parametrize('b, m', [(1, 1), (4, 32)])
    def test_match_closed_form(self, b, m):
        cfg = ScenarioConfig(geom_bs=ArrayGeometry.square(b), geom_rs=ArrayGeometry.square(m),
                             budget=LinkBudget(1.0, 1.0, 1.0, 1.0), mob=MobilityModel(), trials=100)
        records = run_moment_check(cfg, threads=4)
        closed = moments_closed_form(b, m, 1.0, 1.0, 1.0, 1.0)
        expected = dict(zip(MOMENT_NAMES, (closed.m_sI1, closed.m_I1, closed.m_I2, closed.m_I3, closed.m_I4)))
        assert [record.metric_name for record in records] == list(MOMENT_NAMES)
        for record in records:
            assert record.samples == 10 ** 6
            assert record.value == pytest.approx(expected[record.metric_name], rel=0.02)

    def test_requires_iid_model(self):
        cfg = parse_config(LowAngularSpread.file_name)
        with pytest.raises(ValueError):
            run_moment_check(cfg)


class TestSep:

    def test_noise_free_static_link_has_no_errors(self):
        cfg = _small(budget=LinkBudget(1.0, 1.0, 1e-20, 1.0), mob=MobilityModel(), ofdm=OfdmNumerology(),
                     trials=1, simulated_subcarriers=80)
        record = run_sep(cfg)
        assert record.value == 0
        assert record.samples == 80 * 139
        assert record.ci_low == pytest.approx(0, abs=1e-12)
        assert record.ci_high > 0

    def test_zero_decision_variables_are_reported(self, monkeypatch):
        cfg = _small(trials=2)
        assert run_sep(cfg).zero_decisions == 0
        monkeypatch.setattr(engine, 'diff_decode_grid', lambda y, m: DecisionGrid(np.zeros(y.shape[:2])[:, 1:]))
        record = run_sep(cfg)
        assert record.zero_decisions == record.samples == 2 * 8 * 19
        assert 'zero_decisions' not in records_to_frame([record]).columns

    def test_thread_count_does_not_change_results(self):
        cfg = _small(trials=40, max_errors=10, min_decisions=100)
        assert run_sep(cfg, threads=1) == run_sep(cfg, threads=3)

    def test_early_stopping(self):
        cfg = _small(budget=LinkBudget.from_db(-48, -59, -94, -20), trials=64, max_errors=10, min_decisions=100)
        record = run_sep(cfg)
        # the stopping rule is checked after every trial of the first chunk
        assert record.samples < 64 * 8 * 19

    def test_infeasible_coherent_scheme(self):
        cfg = _small(scheme='cds', geom_rs=ArrayGeometry(16, 16), mob=MobilityModel.from_speed(10), calibration=0.5)
        record = run_sep(cfg)
        assert record.status == STATUS_INFEASIBLE
        assert record.value is None and record.samples == 0
        assert records_to_frame([record]).loc[0, 'status'] == STATUS_INFEASIBLE

    @pytest.mark.parametrize('preset', [LowAngularSpread, HighAngularSpread])
    def test_geometric_presets_reject_large_coherent_surfaces(self, preset):
        cfg = parse_config(preset.file_name)
        assert cfg.calibration == 0.5
        cfg = apply_axis(apply_axis(replace(cfg, scheme='cds'), 'M', 256), 'speed', 10)
        assert run_sep(cfg).status == STATUS_INFEASIBLE

    def test_coherent_power_is_shifted_by_efficiency(self):
        cfg = _small(scheme='cds', mob=MobilityModel.from_speed(30), calibration=0.5)
        record = run_sep(cfg)
        assert record.tx_power_eff_dbw == pytest.approx(-10 * np.log10(1 - 16 / 61))

    def test_sweep_shares_the_template_digest(self):
        cfg = _small(trials=2)
        records = sweep(cfg, 'P_x', [0.0, 10.0], 'sep')
        assert [record.tx_power_dbw for record in records] == pytest.approx([0.0, 10.0])
        assert {record.config_digest for record in records} == {cfg.digest()}
        with pytest.raises(ValueError):
            sweep(cfg, 'P_x', [0.0], 'ber')

    @pytest.mark.slow
    def test_more_elements_lower_the_error_rate(self):
        cfg = parse_config(LowAngularSpread.file_name)
        cfg = replace(cfg, trials=32)
        records = sweep(cfg, 'M', [32, 64, 256], 'sep', threads=4)
        values = [record.value for record in records]
        assert values[0] > values[1] > values[2]
        assert records[0].ci_low > records[1].ci_high
        assert records[1].ci_low > records[2].ci_high

    @pytest.mark.slow
    def test_large_surface_only_fits_the_non_coherent_scheme(self):
        cfg = parse_config(LowAngularSpread.file_name)
        cfg = apply_axis(apply_axis(replace(cfg, trials=4), 'M', 256), 'speed', 10)
        assert run_sep(replace(cfg, scheme='cds')).status == STATUS_INFEASIBLE
        ncds = run_sep(replace(cfg, scheme='ncds'))
        assert ncds.value is not None and 0 <= ncds.value < 1
