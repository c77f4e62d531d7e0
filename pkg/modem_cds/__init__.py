from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from analysis import coherence_symbols, efficiency_factor
from channel import ChannelRealization, complex_gaussian, per_element_cascade
from modem_ncds import psk_demap, psk_map, zero_decisions
from surface import PhaseSchedule, is_orthogonal, optimize_schedule_cds, training_schedule


@dataclass(frozen=True)
class CascadedEstimate:
    """
    Least-squares estimate of the per-element cascaded channel, K x B x M, and the variance of its error.
    """
    per_element: np.ndarray
    noise_var_est: float


@dataclass(frozen=True)
class CdsFrameResult:
    """
    Outcome of one coherence block of the coherent baseline. When infeasible, no data is sent and
    the index arrays are empty.
    """
    feasible: bool
    transmitted: np.ndarray
    decided: np.ndarray
    coherence_symbols: float
    pilot_fraction: float
    efficiency: float
    zero_decisions: int = 0

    @property
    def errors(self) -> int:
        return int(np.count_nonzero(self.transmitted != self.decided))

    @property
    def decisions(self) -> int:
        return int(self.transmitted.size)


def sound_cascaded(rx_training: np.ndarray, training: PhaseSchedule, pilot: complex,
                   noise_power: Optional[float] = None) -> CascadedEstimate:
    """
    rx_training holds the K x B received samples of each of the M training symbols along its last axis.
    """
    if not is_orthogonal(training):
        raise ValueError('Training schedule must be an orthogonal M x M sounding matrix')
    m_elements = training.m_elements
    if rx_training.shape[-1] != m_elements:
        raise ValueError('Expected {} training symbols, got {}'.format(m_elements, rx_training.shape[-1]))
    estimate = rx_training @ np.conj(training.coefficients) / (m_elements * pilot)
    error = math.nan if noise_power is None else noise_power / (m_elements * abs(pilot) ** 2)
    return CascadedEstimate(estimate, error)


def mrc_detect(q_hat: np.ndarray, y: np.ndarray) -> complex:
    energy = np.vdot(q_hat, q_hat).real
    if energy == 0:
        raise ValueError('Combining vector is zero')
    return np.vdot(q_hat, y) / energy


def mrc_detect_grid(q_hat: np.ndarray, y: np.ndarray) -> np.ndarray:
    """
    MRC over the last axis; q_hat is K x B and y is K x N x B.
    """
    energy = np.sum(np.abs(q_hat) ** 2, axis=-1)
    if np.any(energy == 0):
        raise ValueError('Combining vector is zero on at least one subcarrier')
    return np.einsum('kb,knb->kn', np.conj(q_hat), y) / energy[:, None]


def effective_power(tx_power: float, efficiency: float) -> Optional[float]:
    """
    Power at which a coherent result is reported once the sounding overhead is charged.
    """
    if efficiency <= 0:
        return None
    return tx_power / efficiency


def cds_frame_pipeline(scenario, channel: ChannelRealization, rng: np.random.Generator) -> CdsFrameResult:
    """
    One coherence block: DFT sounding of the cascaded channel, phase optimisation on the estimate and MRC
    detection of coherent PSK on the remaining symbols. The channel is held at its first symbol.
    """
    budget = scenario.budget
    ofdm = scenario.ofdm
    m_elements = channel.elements
    coherence = coherence_symbols(scenario.mob.doppler_hz, ofdm.subcarrier_spacing, ofdm.subcarriers,
                                  ofdm.cp_length, scenario.calibration)
    efficiency = efficiency_factor(m_elements, coherence)
    pilot_fraction = 0.0 if math.isinf(coherence) else m_elements / math.floor(coherence + 0.5)
    if efficiency == 0:
        empty = np.zeros((channel.subcarriers, 0), dtype=int)
        return CdsFrameResult(False, empty, empty, coherence, min(pilot_fraction, 1.0), 0.0)

    true_cascade = per_element_cascade(channel, 0)
    pilot = np.sqrt(budget.tx_power)
    training = training_schedule(m_elements)
    rx_training = pilot * true_cascade @ training.coefficients.T
    rx_training = rx_training + complex_gaussian(rng, rx_training.shape, budget.noise_power)
    estimate = sound_cascaded(rx_training, training, pilot, budget.noise_power)

    phases = optimize_schedule_cds(estimate.per_element, scenario.optimizer_iterations)
    psi = phases.coefficients[0]
    q_true = true_cascade @ psi
    q_hat = estimate.per_element @ psi

    data_symbols = ofdm.frame_symbols
    if not math.isinf(coherence):
        data_symbols = min(math.floor(coherence + 0.5) - m_elements, data_symbols)
    indices = rng.integers(0, scenario.order, (channel.subcarriers, data_symbols))
    x = pilot * psk_map(indices, scenario.order).values
    y = q_true[:, None, :] * x[..., None]
    y = y + complex_gaussian(rng, y.shape, budget.noise_power)
    z = mrc_detect_grid(q_hat, y)
    return CdsFrameResult(True, indices, psk_demap(z, scenario.order), coherence, pilot_fraction, efficiency,
                          zero_decisions(z))
