"""SINR and achievable-rate bookkeeping shared by the solvers."""
from __future__ import annotations

import numpy as np


def received_amplitudes(h_eff: np.ndarray, d: np.ndarray) -> np.ndarray:
    """``S[..., m, k, j] = h_eff[m, k] @ d[m, j]`` for h_eff, d of shape (..., M, K, N_RF)."""
    return np.einsum("...mkc,...mjc->...mkj", h_eff, d)


def sinr_from_amplitudes(S: np.ndarray, sigma2) -> np.ndarray:
    power = np.abs(S) ** 2
    signal = np.diagonal(power, axis1=-2, axis2=-1)
    interference = power.sum(axis=-1) - signal
    return signal / (interference + sigma2)


def sinr(h_eff: np.ndarray, d: np.ndarray, sigma2) -> np.ndarray:
    """Per (m, k) SINR of user k on subcarrier m."""
    return sinr_from_amplitudes(received_amplitudes(h_eff, d), sigma2)


def sum_rate(gamma: np.ndarray):
    """Return ``(R_sum, R_sum / M)`` for a (M, K) SINR array."""
    gamma = np.asarray(gamma, dtype=float)
    total = float(np.sum(np.log2(1.0 + gamma)))
    M = gamma.shape[0] if gamma.ndim else 1
    return total, total / max(M, 1)


def rate(h_eff: np.ndarray, d: np.ndarray, sigma2) -> float:
    return float(np.sum(np.log2(1.0 + sinr(h_eff, d, sigma2))))


def batch_rates(h_eff: np.ndarray, d: np.ndarray, sigma2) -> np.ndarray:
    """Sum rates for a leading batch axis of ``h_eff`` (L, M, K, N_RF)."""
    gamma = sinr_from_amplitudes(received_amplitudes(h_eff, d[None]), sigma2)
    return np.log2(1.0 + gamma).sum(axis=(-2, -1))
