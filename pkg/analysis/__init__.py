from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import pandas as pd

from channel import OfdmNumerology, doppler_from_speed

COHERENCE_CONSTANT: float = 0.423
TABLE_CALIBRATION: float = 0.5
TABLE_SPEEDS_KMH: list[int] = [3, 10, 20, 30, 40]
TABLE_ELEMENTS: list[int] = [32, 64, 128, 256, 512]
# published efficiency factors, rows M, columns UE speed in km/h
REFERENCE_EFFICIENCY_TABLE: dict[int, list[float]] = {
    32: [0.9475, 0.8251, 0.6484, 0.4754, 0.3043],
    64: [0.8951, 0.6503, 0.2967, 0.0, 0.0],
    128: [0.7902, 0.3005, 0.0, 0.0, 0.0],
    256: [0.5803, 0.0, 0.0, 0.0, 0.0],
    512: [0.1607, 0.0, 0.0, 0.0, 0.0],
}


@dataclass(frozen=True)
class MomentSet:
    """
    Expected values entering the SINR of the differential decision variable.
    """
    m_sI1: float
    m_I1: float
    m_I2: float
    m_I3: float
    m_I4: float


@dataclass(frozen=True)
class ComplexityCounts:
    cds_opt_order: int
    cds_products: int
    ncds_products: int


def _check_non_negative(**values: float):
    for name, value in values.items():
        if value < 0:
            raise ValueError('{} must be non-negative, got {}'.format(name, value))


def moments_closed_form(b: int, m: int, sigma_h2: float, sigma_g2: float, sigma_v2: float,
                        tx_power: float) -> MomentSet:
    _check_non_negative(b=b, m=m, sigma_h2=sigma_h2, sigma_g2=sigma_g2, sigma_v2=sigma_v2, tx_power=tx_power)
    cross = sigma_v2 * tx_power * b * sigma_h2 * m * sigma_g2
    return MomentSet(m_sI1=tx_power ** 2 * b * sigma_h2 * m * sigma_g2,
                     m_I1=tx_power ** 2 * (1 + b) * b * sigma_h2 ** 2 * (1 + m) * m * sigma_g2 ** 2,
                     m_I2=cross,
                     m_I3=cross,
                     m_I4=b * sigma_v2 ** 2)


def sinr_ncds(b: int, m: int, sigma_h2: float, sigma_g2: float, sigma_v2: float, tx_power: float) -> float:
    """
    SINR of the non-coherent decision variable under IID Rayleigh fading.
    """
    gain = sigma_h2 * sigma_g2 * tx_power
    denominator = b + m + 1 + 2 * sigma_v2 / gain + sigma_v2 ** 2 / (gain ** 2 * m)
    return m * b / denominator


def sinr_ncds_high_power(b: int, m: int) -> float:
    return m * b / (b + m + 1)


def sinr_from_moments(moments: MomentSet, b: int, m: int, sigma_h2: float, sigma_g2: float,
                      tx_power: float) -> float:
    """
    SINR rebuilt from the individual moments: reference power over the mean squared error of z
    with respect to the scaled symbol.
    """
    reference = (sigma_h2 * sigma_g2 * tx_power) ** 2
    interference = moments.m_I1 + moments.m_I2 + moments.m_I3 + moments.m_I4
    mse = reference + interference / (m * b) ** 2 - 2 * sigma_h2 * sigma_g2 * moments.m_sI1 / (m * b)
    return reference / mse


def coherence_symbols(doppler_hz: float, subcarrier_spacing: float, subcarriers: int, cp_length: int,
                      calibration: float = 1.0) -> float:
    """
    Coherence time in OFDM symbols. A static channel (no Doppler) returns math.inf.
    """
    if doppler_hz < 0:
        raise ValueError('Doppler frequency must be non-negative')
    if doppler_hz == 0:
        return math.inf
    return calibration * (subcarrier_spacing / doppler_hz) * COHERENCE_CONSTANT * subcarriers / \
        (subcarriers + cp_length)


def efficiency_factor(m: int, coherence: float) -> float:
    """
    Fraction of the coherence block left for data once the M sounding symbols are sent.
    """
    if m < 1:
        raise ValueError('At least one RS element is required')
    if math.isinf(coherence):
        return 1.0
    block = math.floor(coherence + 0.5)
    if m >= block:
        return 0.0
    return 1 - m / block


def efficiency_table(speeds_kmh: Sequence[float] = tuple(TABLE_SPEEDS_KMH),
                     elements: Sequence[int] = tuple(TABLE_ELEMENTS),
                     calibration: float = 1.0, ofdm: OfdmNumerology = OfdmNumerology(),
                     carrier_hz: float = 3.5e9) -> pd.DataFrame:
    rows = []
    for m in elements:
        row = {'M': m}
        for speed in speeds_kmh:
            coherence = coherence_symbols(doppler_from_speed(speed, carrier_hz), ofdm.subcarrier_spacing,
                                          ofdm.subcarriers, ofdm.cp_length, calibration)
            row['{:g} km/h'.format(speed)] = efficiency_factor(m, coherence)
        rows.append(row)
    return pd.DataFrame(rows)


def complexity_counts(b: int, m: int, k: int, iterations: int) -> ComplexityCounts:
    for name, value in (('B', b), ('M', m), ('K', k), ('R_t', iterations)):
        if value < 1:
            raise ValueError('{} must be at least 1, got {}'.format(name, value))
    return ComplexityCounts(cds_opt_order=iterations * (b ** 3 + m) * k,
                            cds_products=b * k,
                            ncds_products=(b + 1) * (k - 1))
