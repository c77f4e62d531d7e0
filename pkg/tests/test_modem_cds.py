import numpy as np
import pytest
from numpy.testing import assert_allclose

from channel import ArrayGeometry, LinkBudget, MobilityModel, OfdmNumerology, complex_gaussian
from engine import ScenarioConfig, draw_channel
from modem_cds import cds_frame_pipeline, effective_power, mrc_detect, mrc_detect_grid, sound_cascaded
from surface import random_schedule, training_schedule


class TestSounding:

    def test_noise_free_estimate_is_exact(self, rng):
        truth = complex_gaussian(rng, (3, 2, 16), 1.0)
        training = training_schedule(16)
        pilot = np.sqrt(2.0)
        estimate = sound_cascaded(pilot * truth @ training.coefficients.T, training, pilot)
        assert_allclose(estimate.per_element, truth, rtol=1e-10, atol=1e-12)

    def test_noise_only_variance(self, rng):
        training = training_schedule(64)
        noise = complex_gaussian(rng, (500, 4, 64), 1.0)
        estimate = sound_cascaded(noise, training, 1.0, noise_power=1.0)
        assert np.var(estimate.per_element) == pytest.approx(1 / 64, rel=0.05)
        assert estimate.noise_var_est == pytest.approx(1 / 64)

    def test_requires_orthogonal_training(self, rng):
        with pytest.raises(ValueError):
            sound_cascaded(np.ones((1, 1, 4)), random_schedule(4, 4, rng), 1.0)

    def test_requires_one_sample_per_training_symbol(self):
        with pytest.raises(ValueError):
            sound_cascaded(np.ones((1, 1, 3)), training_schedule(4), 1.0)


class TestCombining:

    def test_perfect_csi(self, rng):
        q = complex_gaussian(rng, 4, 1.0)
        x = np.exp(1j * 0.3)
        assert mrc_detect(q, q * x) == pytest.approx(x)

    def test_zero_combiner(self):
        with pytest.raises(ValueError):
            mrc_detect(np.zeros(2), np.ones(2))

    def test_grid_matches_single(self, rng):
        q_hat = complex_gaussian(rng, (3, 2), 1.0)
        y = complex_gaussian(rng, (3, 5, 2), 1.0)
        assert mrc_detect_grid(q_hat, y)[1, 4] == pytest.approx(mrc_detect(q_hat[1], y[1, 4]))

    def test_effective_power(self):
        assert effective_power(1.0, 0.5) == pytest.approx(2.0)
        assert effective_power(1.0, 0.0) is None


class TestPipeline:

    def test_noise_free_static_link(self, rng):
        cfg = ScenarioConfig(geom_rs=ArrayGeometry(4, 4), budget=LinkBudget(1.0, 1.0, 1e-20, 1.0),
                             ofdm=OfdmNumerology(frame_symbols=80), mob=MobilityModel(), simulated_subcarriers=128,
                             scheme='cds')
        result = cds_frame_pipeline(cfg, draw_channel(cfg, rng), rng)
        assert result.feasible
        assert result.efficiency == 1.0
        assert result.decisions == 128 * 80
        assert result.errors == 0

    def test_block_length_follows_coherence_time(self, rng):
        cfg = ScenarioConfig(geom_rs=ArrayGeometry(4, 4), mob=MobilityModel.from_speed(30), calibration=0.5,
                             simulated_subcarriers=4, scheme='cds')
        result = cds_frame_pipeline(cfg, draw_channel(cfg, rng), rng)
        # nearest-integer coherence time at 30 km/h is 61 symbols with this calibration
        assert result.decisions == 4 * (61 - 16)
        assert result.efficiency == pytest.approx(1 - 16 / 61)

    def test_sounding_that_does_not_fit_is_infeasible(self, rng):
        cfg = ScenarioConfig(geom_rs=ArrayGeometry(16, 16), mob=MobilityModel.from_speed(10), calibration=0.5,
                             simulated_subcarriers=2, scheme='cds')
        result = cds_frame_pipeline(cfg, draw_channel(cfg, rng), rng)
        assert not result.feasible
        assert result.decisions == 0
        assert result.efficiency == 0.0
