"""Weighted-MMSE digital precoding for a fixed analog beamformer.

Shapes: ``h_eff`` (M, K, N_RF) holds the rows ``h[m, k] F_m``; ``d``
(M, K, N_RF) the digital precoders; ``F`` (M, N, N_RF) the analog matrices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .metrics import rate, received_amplitudes

LN2 = np.log(2.0)


def transmit_power(d: np.ndarray, F: np.ndarray) -> float:
    """``sum_{m,k} ||F_m d[m, k]||^2``."""
    x = np.einsum("mnc,mkc->mkn", F, d)
    return float(np.sum(np.abs(x) ** 2))


def scale_to_power(d: np.ndarray, F: np.ndarray, P_max: float, equality: bool = True) -> np.ndarray:
    p = transmit_power(d, F)
    if p == 0 or (not equality and p <= P_max):
        return d
    return d * np.sqrt(P_max / p)


def matched_filter_init(h_eff: np.ndarray, F: np.ndarray, P_max: float) -> np.ndarray:
    """``d[m, k] = h_eff[m, k]^H`` scaled to spend the full budget."""
    return scale_to_power(h_eff.conj().copy(), F, P_max)


def update_combiners(h_eff: np.ndarray, d: np.ndarray, sigma2) -> np.ndarray:
    """MMSE receive scalars ``chi[m, k]`` for the estimate ``chi * y``: ``conj(h d_k) / total power``."""
    S = received_amplitudes(h_eff, d)
    total = np.sum(np.abs(S) ** 2, axis=-1) + sigma2
    return np.diagonal(S, axis1=-2, axis2=-1).conj() / total


def mse(h_eff: np.ndarray, d: np.ndarray, chi: np.ndarray, sigma2) -> np.ndarray:
    """``E|chi y - s|^2`` per (m, k), written as a sum of non-negative terms."""
    S = received_amplitudes(h_eff, d)
    power = np.abs(S) ** 2
    signal = np.diagonal(S, axis1=-2, axis2=-1)
    interference = power.sum(axis=-1) - np.abs(signal) ** 2
    return np.abs(1.0 - chi * signal) ** 2 + np.abs(chi) ** 2 * (interference + sigma2)


def update_weights(chi: np.ndarray, h_eff: np.ndarray, d: np.ndarray, sigma2):
    """Return ``(xi, omega)`` with ``omega = 1 / xi``."""
    xi = mse(h_eff, d, chi, sigma2)
    return xi, 1.0 / xi


def wmmse_objective(h_eff, d, chi, omega, sigma2) -> float:
    """``sum(omega xi / ln2 - log2 omega - 1/ln2)``; equals minus the sum rate at the optimum."""
    xi = mse(h_eff, d, chi, sigma2)
    return float(np.sum(omega * xi / LN2 - np.log2(omega) - 1.0 / LN2))


def _whitener(F_m: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """``W`` with ``F_m W`` orthonormal; its columns span the row space of ``F_m``."""
    _, s, vh = np.linalg.svd(F_m, full_matrices=False)
    keep = s > rtol * s[0] if s.size and s[0] > 0 else np.zeros(s.shape, bool)
    return vh[keep].conj().T / s[keep]


@dataclass
class _PrecoderSystem:
    W: list
    Q: list
    lam: list
    c: list


def _bisect_mu(lam_flat, c2_flat, P_max, total_c2, rtol=1e-12, max_iter=200):
    def power(mu):
        return float(np.sum(c2_flat / (lam_flat + mu) ** 2))

    lo, hi = 0.0, np.sqrt(total_c2 / P_max)
    for _ in range(max_iter):
        if hi - lo <= rtol * hi:
            break
        mid = 0.5 * (lo + hi)
        if power(mid) > P_max:
            lo = mid
        else:
            hi = mid
    return hi


def update_precoders(h_eff: np.ndarray, chi: np.ndarray, omega: np.ndarray, F: np.ndarray,
                     P_max: float, return_mu: bool = False):
    """Exact minimizer of ``sum omega xi`` under the total power budget.

    Solves ``d[m, k] = (A_m + mu F_m^H F_m)^-1 omega chi^* h_eff[m, k]^H`` in
    coordinates where ``F_m^H F_m`` is the identity, with the multiplier
    ``mu >= 0`` found by bisection. Directions the analog matrix cannot
    radiate are dropped (minimum-norm solution).
    """
    M, K, n_rf = h_eff.shape
    d = np.zeros((M, K, n_rf), dtype=complex)
    if K == 0:
        return (d, 0.0) if return_mu else d
    sys = _PrecoderSystem([], [], [], [])
    for m in range(M):
        W = _whitener(F[m])
        g = h_eff[m] @ W                                    # (K, r)
        wts = omega[m] * np.abs(chi[m]) ** 2
        A = (g.conj().T * wts) @ g
        A = 0.5 * (A + A.conj().T)
        b = (omega[m] * chi[m].conj())[:, None] * g.conj()  # (K, r)
        lam, Q = np.linalg.eigh(A)
        lam = np.maximum(lam, 0.0)
        sys.W.append(W)
        sys.Q.append(Q)
        sys.lam.append(lam)
        sys.c.append(b @ Q.conj())                          # rows: Q^H b_k
    lam_all = np.concatenate([np.broadcast_to(l, c.shape).ravel() for l, c in zip(sys.lam, sys.c)])
    c2_all = np.concatenate([np.abs(c).ravel() ** 2 for c in sys.c])
    lam_max = lam_all.max() if lam_all.size else 0.0
    null = lam_all <= 1e-12 * lam_max if lam_max > 0 else np.ones(lam_all.shape, bool)

    p0 = float(np.sum(np.where(null, 0.0, c2_all / np.where(null, 1.0, lam_all) ** 2)))
    mu = 0.0 if p0 <= P_max else _bisect_mu(lam_all, c2_all, P_max, float(c2_all.sum()))

    for m in range(M):
        lam, c = sys.lam[m], sys.c[m]
        den = lam + mu
        if mu == 0.0:
            dead = lam <= 1e-12 * lam_max if lam_max > 0 else np.ones(lam.shape, bool)
            inv = np.where(dead, 0.0, 1.0 / np.where(dead, 1.0, den))
        else:
            inv = 1.0 / den
        z = (c * inv) @ sys.Q[m].T                          # (K, r)
        d[m] = z @ sys.W[m].T
    return (d, mu) if return_mu else d


@dataclass
class WmmseResult:
    d: np.ndarray
    rate_trace: List[float]
    chi: Optional[np.ndarray] = None
    omega: Optional[np.ndarray] = None
    mu: float = 0.0
    iterations: int = 0
    objective_trace: List[float] = field(default_factory=list)


def wmmse_solve(h_eff: np.ndarray, F: np.ndarray, P_max: float, sigma2,
                d_init: Optional[np.ndarray] = None, max_iter: int = 5, tol: float = 1e-4) -> WmmseResult:
    """Alternate combiner, weight and precoder updates.

    ``rate_trace[0]`` is the rate of the (feasible) starting point and each
    further entry the rate after one full iteration.
    """
    if d_init is None:
        d = matched_filter_init(h_eff, F, P_max)
    else:
        d = scale_to_power(np.array(d_init, dtype=complex), F, P_max, equality=False)
    trace = [rate(h_eff, d, sigma2)]
    objectives = []
    chi = omega = None
    mu = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        chi = update_combiners(h_eff, d, sigma2)
        _, omega = update_weights(chi, h_eff, d, sigma2)
        d, mu = update_precoders(h_eff, chi, omega, F, P_max, return_mu=True)
        objectives.append(wmmse_objective(h_eff, d, chi, omega, sigma2))
        trace.append(rate(h_eff, d, sigma2))
        prev = trace[-2]
        if abs(trace[-1] - prev) <= tol * max(abs(prev), 1e-300):
            break
    return WmmseResult(d=d, rate_trace=trace, chi=chi, omega=omega, mu=mu, iterations=it,
                       objective_trace=objectives)
