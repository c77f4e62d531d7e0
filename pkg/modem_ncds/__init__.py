from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

SUPPORTED_ORDERS: tuple[int, ...] = (2, 4, 8, 16)
REFERENCE_INDEX: int = 0
# decimals kept when comparing phase distances, so that exact boundary points tie
TIE_DECIMALS: int = 12


@dataclass(frozen=True)
class SymbolGrid:
    values: np.ndarray
    constellation_order: int


@dataclass(frozen=True)
class DecisionGrid:
    """
    Column n holds z for the symbol pair (n, n + 1) of the frame, 0-based.
    """
    values: np.ndarray


@dataclass(frozen=True)
class InterferenceTerms:
    i1: complex
    i2: complex
    i3: complex
    i4: complex

    @property
    def total(self) -> complex:
        return self.i1 + self.i2 + self.i3 + self.i4


def _check_order(order: int):
    if order not in SUPPORTED_ORDERS:
        raise ValueError('PSK order {} is not supported, use one of {}'.format(order, SUPPORTED_ORDERS))


def constellation_offset(order: int) -> float:
    return np.pi / order if order % 2 == 0 else 0.0


def constellation(order: int) -> np.ndarray:
    _check_order(order)
    return np.exp(1j * (2 * np.pi * np.arange(order) / order + constellation_offset(order)))


def psk_map(indices: np.ndarray, order: int) -> SymbolGrid:
    _check_order(order)
    indices = np.asarray(indices)
    if np.any(indices < 0) or np.any(indices >= order):
        raise ValueError('Symbol indices must lie in [0, {})'.format(order))
    return SymbolGrid(constellation(order)[indices], order)


def psk_demap(values: np.ndarray, order: int) -> np.ndarray:
    """
    Phase-nearest constellation index for every entry; ties go to the smaller index and z = 0 maps to 0.
    """
    points = constellation(order)
    values = np.asarray(values)
    distances = np.abs(np.angle(values[..., None] * np.conj(points)))
    indices = np.argmin(np.round(distances, TIE_DECIMALS), axis=-1)
    return np.where(values == 0, 0, indices)


def zero_decisions(values: np.ndarray) -> int:
    """
    Number of decision variables that are exactly zero and therefore carry no phase.
    """
    return int(np.count_nonzero(np.asarray(values) == 0))


def decide(z: Union[complex, np.ndarray], order: int) -> Union[int, np.ndarray]:
    result = psk_demap(z, order)
    return int(result) if np.ndim(result) == 0 else result


def diff_encode(s: SymbolGrid, tx_power: float) -> SymbolGrid:
    """
    Time-domain differential encoding along the symbol axis, scaled to transmit power tx_power.
    """
    values = np.asarray(s.values)
    if not np.allclose(np.abs(values), 1, rtol=0, atol=1e-9):
        raise ValueError('Data symbols must have unit modulus')
    return SymbolGrid(np.sqrt(tx_power) * np.cumprod(values, axis=-1), s.constellation_order)


def diff_decode(y_prev: np.ndarray, y_curr: np.ndarray, m_elements: int, b_antennas: int) -> complex:
    y_prev = np.asarray(y_prev)
    y_curr = np.asarray(y_curr)
    if y_prev.shape != y_curr.shape:
        raise ValueError('Received vectors differ in dimension: {} vs {}'.format(y_prev.shape, y_curr.shape))
    return np.vdot(y_prev, y_curr) / (m_elements * b_antennas)


def diff_decode_grid(y: np.ndarray, m_elements: int) -> DecisionGrid:
    """
    Decision variables for a K x N x B received grid.
    """
    b_antennas = y.shape[-1]
    z = np.einsum('knb,knb->kn', np.conj(y[:, :-1]), y[:, 1:])
    return DecisionGrid(z / (m_elements * b_antennas))


def decompose_terms(q_prev: np.ndarray, q_curr: np.ndarray, x_prev: complex, x_curr: complex,
                    v_prev: np.ndarray, v_curr: np.ndarray) -> InterferenceTerms:
    """
    Split y_prev^H y_curr into the useful term I1 and the interference terms I2, I3, I4.
    I1 carries the power of the differential symbol: I1 = x_prev^* x_curr q_prev^H q_curr.
    """
    shapes = {np.shape(q_prev), np.shape(q_curr), np.shape(v_prev), np.shape(v_curr)}
    if len(shapes) != 1:
        raise ValueError('Inconsistent dimensions: {}'.format(shapes))
    tx_power = abs(x_prev) ** 2
    s = np.conj(x_prev) * x_curr / tx_power if tx_power > 0 else 0
    return InterferenceTerms(i1=np.vdot(q_prev, q_curr) * s * tx_power,
                             i2=np.vdot(q_prev * x_prev, v_curr),
                             i3=np.vdot(v_prev, q_curr * x_curr),
                             i4=np.vdot(v_prev, v_curr))


def reference_indices(indices: np.ndarray) -> np.ndarray:
    """
    Force the first symbol of every subcarrier to the reference index.
    """
    indices = np.array(indices, copy=True)
    indices[..., 0] = REFERENCE_INDEX
    return indices
