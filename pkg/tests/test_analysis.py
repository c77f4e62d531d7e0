import math

import numpy as np
import pytest

from analysis import REFERENCE_EFFICIENCY_TABLE, TABLE_CALIBRATION, TABLE_ELEMENTS, TABLE_SPEEDS_KMH, \
    coherence_symbols, complexity_counts, efficiency_factor, efficiency_table, moments_closed_form, \
    sinr_from_moments, sinr_ncds, sinr_ncds_high_power
from channel import doppler_from_speed


def _coherence(speed_kmh: float, calibration: float = 1.0) -> float:
    return coherence_symbols(doppler_from_speed(speed_kmh, 3.5e9), 30e3, 1024, 72, calibration)


class TestSinr:

    def test_high_power_limit(self):
        assert sinr_ncds_high_power(4, 64) == pytest.approx(256 / 69)
        assert sinr_ncds(4, 64, 1.0, 1.0, 1e-12, 1.0) == pytest.approx(256 / 69, rel=1e-9)

    def test_grows_with_power_and_elements(self):
        low = sinr_ncds(4, 64, 10 ** -4.8, 10 ** -5.9, 10 ** -9.4, 1.0)
        assert sinr_ncds(4, 64, 10 ** -4.8, 10 ** -5.9, 10 ** -9.4, 10.0) > low
        assert sinr_ncds(4, 256, 10 ** -4.8, 10 ** -5.9, 10 ** -9.4, 1.0) > low

    def test_rebuilt_from_moments(self, rng):
        for _ in range(200):
            b, m = rng.integers(1, 128, 2).tolist()
            h2, g2, v2, p = 10 ** rng.uniform(-6, 1, 4)
            moments = moments_closed_form(b, m, h2, g2, v2, p)
            assert sinr_from_moments(moments, b, m, h2, g2, p) == pytest.approx(sinr_ncds(b, m, h2, g2, v2, p),
                                                                                 rel=1e-9)

    def test_moments_with_unit_parameters(self):
        assert moments_closed_form(1, 1, 1, 1, 1, 1).m_I1 == 4
        assert moments_closed_form(4, 32, 1, 1, 1, 1).m_sI1 == 128
        assert moments_closed_form(4, 32, 1, 1, 1, 1).m_I4 == 4

    def test_negative_inputs(self):
        with pytest.raises(ValueError):
            moments_closed_form(1, 1, -1, 1, 1, 1)


class TestCoherence:

    def test_raw_formula_at_three_kmh(self):
        assert _coherence(3) == pytest.approx(1219.6, abs=0.5)
        assert _coherence(3, TABLE_CALIBRATION) == pytest.approx(609.8, abs=0.5)

    def test_static_channel(self):
        assert math.isinf(coherence_symbols(0.0, 30e3, 1024, 72))
        assert efficiency_factor(512, math.inf) == 1.0

    def test_negative_doppler(self):
        with pytest.raises(ValueError):
            coherence_symbols(-1.0, 30e3, 1024, 72)

    @pytest.mark.parametrize('m, speed, expected', [(32, 3, 0.9475), (64, 20, 0.2967), (64, 30, 0.0)])
    def test_table_entries(self, m, speed, expected):
        assert efficiency_factor(m, _coherence(speed, TABLE_CALIBRATION)) == pytest.approx(expected, abs=0.0005)

    def test_full_table(self):
        table = efficiency_table(TABLE_SPEEDS_KMH, TABLE_ELEMENTS, TABLE_CALIBRATION)
        assert list(table.columns) == ['M', '3 km/h', '10 km/h', '20 km/h', '30 km/h', '40 km/h']
        for _, row in table.iterrows():
            expected = np.array(REFERENCE_EFFICIENCY_TABLE[int(row['M'])])
            actual = row.drop('M').to_numpy(dtype=float)
            np.testing.assert_allclose(actual, expected, rtol=0, atol=0.002)
            assert np.all(actual[expected == 0] == 0)

    def test_overhead_is_proportional_to_elements(self):
        for speed in TABLE_SPEEDS_KMH:
            coherence = _coherence(speed, TABLE_CALIBRATION)
            values = [efficiency_factor(m, coherence) for m in TABLE_ELEMENTS]
            assert all(a >= b for a, b in zip(values, values[1:]))
            if values[1] > 0:
                assert (1 - values[0]) / (1 - values[1]) == pytest.approx(32 / 64)


class TestComplexity:

    def test_random_tuples(self, rng):
        for b, m, k, r in rng.integers(1, 2000, (100, 4)).tolist():
            counts = complexity_counts(b, m, k, r)
            assert counts.cds_products == b * k
            assert counts.ncds_products == (b + 1) * (k - 1)
            assert counts.cds_opt_order == r * (b ** 3 + m) * k

    def test_invalid_counts(self):
        with pytest.raises(ValueError):
            complexity_counts(0, 1, 1, 1)
