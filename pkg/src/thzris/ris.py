"""Discrete RIS phase optimization by one-element-at-a-time search."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .channel import ChannelSet
from .metrics import batch_rates

_TIE_RTOL = 1e-12


def candidate_set(Q: int) -> np.ndarray:
    """The ``2^Q`` unit-modulus reflection coefficients ``exp(j 2 pi q / 2^Q)``."""
    if Q < 1:
        raise ValueError("Q must be >= 1")
    L = 2 ** Q
    out = np.exp(2j * np.pi * np.arange(L) / L)
    # exact values on the axes (1, j, -1, -j)
    return np.round(out.real, 15) + 1j * np.round(out.imag, 15)


@dataclass(frozen=True)
class ReflectionConfig:
    """Phases of all R * N_RIS elements stored as indices into the Q-bit alphabet."""

    Q: int
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int).reshape(-1).copy()
        if np.any((idx < 0) | (idx >= 2 ** self.Q)):
            raise ValueError("phase index outside the Q-bit alphabet")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @classmethod
    def all_ones(cls, n_elements: int, Q: int = 1) -> "ReflectionConfig":
        return cls(Q, np.zeros(n_elements, dtype=int))

    @property
    def phases(self) -> np.ndarray:
        return candidate_set(self.Q)[self.indices]

    def blocks(self, R: int) -> np.ndarray:
        """Diagonals of Phi_1 ... Phi_R, shape (R, N_RIS)."""
        return self.phases.reshape(R, -1)

    def with_index(self, n: int, q: int) -> "ReflectionConfig":
        idx = self.indices.copy()
        idx[n] = q
        return ReflectionConfig(self.Q, idx)


def element_contributions(channels: ChannelSet, F: np.ndarray) -> np.ndarray:
    """Per-element terms ``f[r,m,k,i] G[r,m,i,:] F_m`` stacked as a (M*K*N_RF, R*N_RIS) matrix.

    ``h_eff`` for phases ``phi`` is then ``(C @ phi).reshape(M, K, N_RF)``.
    """
    GF = np.einsum("rmin,mnc->rmic", channels.G, F)
    C = channels.f[..., None] * GF[:, :, None]          # (R, M, K, N_RIS, N_RF)
    C = np.transpose(C, (1, 2, 4, 0, 3))                # (M, K, N_RF, R, N_RIS)
    M, K, n_rf, R, n_ris = C.shape
    return np.ascontiguousarray(C.reshape(M * K * n_rf, R * n_ris))


@dataclass
class PassStats:
    rates: List[float] = field(default_factory=list)
    evaluations: int = 0
    changed: int = 0


class _Evaluator:
    def __init__(self, channels: ChannelSet, F: np.ndarray, d: np.ndarray, sigma2):
        self.C = element_contributions(channels, F)
        self.shape = d.shape
        self.d = d
        self.sigma2 = sigma2
        self.count = 0

    def rates(self, phi_batch: np.ndarray) -> np.ndarray:
        """Sum rates for phase vectors stacked as columns of ``phi_batch``."""
        h = (self.C @ phi_batch).T.reshape((phi_batch.shape[1],) + self.shape)
        self.count += phi_batch.shape[1]
        return batch_rates(h, self.d, self.sigma2)


def _pick(rates: np.ndarray) -> int:
    best = rates.max()
    tol = _TIE_RTOL * max(abs(best), 1e-300)
    return int(np.flatnonzero(rates >= best - tol)[0])


def _sweep(reflection: ReflectionConfig, ev: _Evaluator, stats: PassStats) -> ReflectionConfig:
    alphabet = candidate_set(reflection.Q)
    idx = reflection.indices.copy()
    L = alphabet.size
    for n in range(idx.size):
        phi = alphabet[idx]
        batch = np.repeat(phi[:, None], L, axis=1)
        batch[n, :] = alphabet
        r = ev.rates(batch)
        q = _pick(r)
        if q != idx[n]:
            stats.changed += 1
            idx[n] = q
        stats.rates.append(float(r[q]))
    stats.evaluations = ev.count
    return ReflectionConfig(reflection.Q, idx)


def coordinate_pass(reflection: ReflectionConfig, channels: ChannelSet, F: np.ndarray, d: np.ndarray, sigma2):
    """One Gauss-Seidel sweep over all elements.

    Each element takes the alphabet value maximizing the sum rate with the
    others held fixed (ties to the lowest index). Returns
    ``(reflection, sum_rate, stats)``; ``stats.rates`` has one entry per element.
    """
    ev = _Evaluator(channels, F, d, sigma2)
    stats = PassStats()
    out = _sweep(reflection, ev, stats)
    final = stats.rates[-1] if stats.rates else float(ev.rates(out.phases[:, None])[0])
    return out, final, stats


@dataclass
class ReflectionResult:
    reflection: ReflectionConfig
    rate_trace: List[float]
    passes: int
    evaluations: int
    converged: bool
    element_rates: List[float] = field(default_factory=list)


def optimize_reflection(channels: ChannelSet, F: np.ndarray, d: np.ndarray, sigma2,
                        reflection_init: Optional[ReflectionConfig] = None, I_o: int = 5, Q: int = 1) -> ReflectionResult:
    """Repeat coordinate passes until a pass changes nothing or ``I_o`` passes ran.

    ``rate_trace[0]`` is the rate of the starting configuration (all +1 by
    default) and each further entry the rate after one pass.
    """
    if I_o < 1:
        raise ValueError("I_o must be >= 1")
    n_el = channels.R * channels.N_RIS
    refl = reflection_init if reflection_init is not None else ReflectionConfig.all_ones(n_el, Q)
    if channels.K == 0 or n_el == 0:
        # nothing to serve: every configuration is equally good, keep the start
        return ReflectionResult(refl, [0.0], 1, 0, True)
    ev = _Evaluator(channels, F, d, sigma2)
    trace = [float(ev.rates(refl.phases[:, None])[0])]
    start_count = ev.count
    element_rates: List[float] = []
    converged = False
    passes = 0
    for passes in range(1, I_o + 1):
        stats = PassStats()
        refl = _sweep(refl, ev, stats)
        element_rates.extend(stats.rates)
        trace.append(stats.rates[-1] if stats.rates else trace[-1])
        if stats.changed == 0:
            converged = True
            break
    return ReflectionResult(refl, trace, passes, ev.count - start_count, converged, element_rates)
