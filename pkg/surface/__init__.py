from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMIZER_ITERATIONS: int = 5
UNIT_MODULUS_TOLERANCE: float = 1e-12


@dataclass(frozen=True)
class PhaseSchedule:
    """
    Reflection coefficients of the RS: one row per OFDM symbol, one column per element.
    """
    coefficients: np.ndarray

    def __post_init__(self):
        if self.coefficients.ndim != 2:
            raise ValueError('Phase schedule must be a N x M matrix')
        if not np.allclose(np.abs(self.coefficients), 1, rtol=0, atol=UNIT_MODULUS_TOLERANCE):
            raise ValueError('Phase schedule entries must have unit modulus')

    @property
    def n_symbols(self) -> int:
        return self.coefficients.shape[0]

    @property
    def m_elements(self) -> int:
        return self.coefficients.shape[1]

    def repeat(self, n_symbols: int) -> PhaseSchedule:
        """
        Hold the first configuration for n_symbols symbols.
        """
        return PhaseSchedule(np.repeat(self.coefficients[:1], n_symbols, axis=0))


def random_schedule(m_elements: int, n_symbols: int, rng: np.random.Generator, static: bool = False) -> PhaseSchedule:
    """
    Uniform random phases. With static=True a single configuration is held for the whole frame,
    otherwise a new one is drawn for every OFDM symbol.
    """
    rows = 1 if static else n_symbols
    coefficients = np.exp(1j * rng.uniform(0, 2 * np.pi, (rows, m_elements)))
    if static:
        coefficients = np.repeat(coefficients, n_symbols, axis=0)
    return PhaseSchedule(coefficients)


def training_schedule(m_elements: int) -> PhaseSchedule:
    """
    DFT sounding sequence: M configurations whose Gram matrix is M * I.
    """
    index = np.arange(m_elements)
    return PhaseSchedule(np.exp(-2j * np.pi * np.outer(index, index) / m_elements))


def is_orthogonal(schedule: PhaseSchedule, tolerance: float = 1e-8) -> bool:
    gram = schedule.coefficients @ schedule.coefficients.conj().T
    m = schedule.m_elements
    return schedule.n_symbols == m and np.allclose(gram, m * np.eye(m), rtol=0, atol=tolerance * m)


def objective(cascaded: np.ndarray, psi: np.ndarray) -> float:
    """
    Received energy sum_k || C_k psi ||^2 for a K x B x M per-element cascaded channel.
    """
    return float(np.sum(np.abs(cascaded @ psi) ** 2))


def coordinate_ascent(cascaded: np.ndarray, iterations: int = OPTIMIZER_ITERATIONS) -> tuple[np.ndarray, list[float]]:
    """
    Cyclic per-element phase alignment. Returns the configuration and the objective after each sweep,
    the first entry being the objective of the all-ones starting point.
    """
    if iterations < 1:
        raise ValueError('At least one iteration is required, got {}'.format(iterations))
    cascaded = np.asarray(cascaded)
    if cascaded.ndim != 3:
        raise ValueError('Cascaded channel must be K x B x M')
    if not np.any(cascaded):
        raise ValueError('Cascaded channel is identically zero, the objective is degenerate')
    m_elements = cascaded.shape[2]
    psi = np.ones(m_elements, dtype=complex)
    combined = cascaded @ psi  # K x B
    history = [objective(cascaded, psi)]
    for _ in range(iterations):
        for m in range(m_elements):
            column = cascaded[:, :, m]
            residual = combined - psi[m] * column
            t = np.vdot(residual, column)
            if abs(t) > 0:
                psi[m] = np.conj(t) / abs(t)
            combined = residual + psi[m] * column
        history.append(objective(cascaded, psi))
    return psi, history


def optimize_schedule_cds(cascaded_per_element: np.ndarray, iterations: int = OPTIMIZER_ITERATIONS,
                          n_symbols: int = 1) -> PhaseSchedule:
    """
    Single optimised configuration, repeated over n_symbols data symbols.
    """
    psi, _ = coordinate_ascent(cascaded_per_element, iterations)
    # renormalise to remove rounding drift from the updates
    psi = psi / np.abs(psi)
    return PhaseSchedule(np.repeat(psi[None, :], n_symbols, axis=0))
