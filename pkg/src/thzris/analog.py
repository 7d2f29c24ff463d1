"""Analog front end: phase shifters and single/double-layer true-time-delay networks.

All three schemes are handled through one hierarchy. An antenna ``n``
(0-based) belongs to PS subarray ``g = n // P`` of size ``P`` and sits at
position ``p = n % P`` inside it. Subarray ``g`` hangs off second-layer TTD
``k_h = g // K_L`` through first-layer TTD ``k_l = g % K_L``.

==============  =====  =====  =======
scheme          K_H    K_L    P
==============  =====  =====  =======
PS only         1      1      N
single layer    U      1      S = N/U
double layer    K_H    K_L    N/(K_H K_L)
==============  =====  =====  =======

so a single-layer network is a double-layer one with ``K_L = 1`` and an
empty first layer. Antenna ``n`` radiates with weight
``amp * exp(j (2 pi f tau_n + psi_n))`` where ``tau_n`` is the sum of the
two TTD delays feeding it and ``psi_n`` its phase-shifter setting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import SystemConfig, ula_response

VARIANTS = ("ps", "single", "double")

_TIE_RTOL = 1e-9


@dataclass(frozen=True)
class AnalogArchitecture:
    """Analog beamforming scheme.

    ``delay_step_tc`` is the TTD step ``D`` in units of ``T_c``; ``None``
    means continuous (unquantized) delays. ``ps_bits = 0`` means
    infinite-resolution phase shifters.
    """

    variant: str
    U: int = 1
    P_s: int = 0
    K_H: int = 1
    K_L: int = 1
    P_H: int = 0
    P_L: int = 0
    delay_step_tc: Optional[float] = 1.0
    ps_bits: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown scheme {self.variant!r}; expected one of {VARIANTS}")
        for name in ("U", "K_H", "K_L"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("P_s", "P_H", "P_L", "ps_bits"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.delay_step_tc is not None and not self.delay_step_tc > 0:
            raise ValueError("delay step D must be positive (or None for continuous)")

    @classmethod
    def ps_only(cls, ps_bits: int = 0) -> "AnalogArchitecture":
        return cls("ps", delay_step_tc=None, ps_bits=ps_bits)

    @classmethod
    def single_layer(cls, U: int, P_s: int = 8, delay_step_tc: Optional[float] = 1.0, ps_bits: int = 0):
        return cls("single", U=U, P_s=P_s, delay_step_tc=delay_step_tc, ps_bits=ps_bits)

    @classmethod
    def double_layer(cls, K_H: int, K_L: int, P_H: int = 8, P_L: int = 4,
                     delay_step_tc: Optional[float] = 1.0, ps_bits: int = 0):
        return cls("double", K_H=K_H, K_L=K_L, P_H=P_H, P_L=P_L, delay_step_tc=delay_step_tc, ps_bits=ps_bits)

    @property
    def layers(self) -> tuple:
        """Effective (K_H, K_L) of the unified hierarchy."""
        if self.variant == "ps":
            return 1, 1
        if self.variant == "single":
            return self.U, 1
        return self.K_H, self.K_L

    @property
    def layer_bits(self) -> tuple:
        """Bits of the (second, first) layer TTDs."""
        if self.variant == "ps":
            return 0, 0
        if self.variant == "single":
            return self.P_s, 0
        return self.P_H, self.P_L

    @property
    def n_subarrays(self) -> int:
        kh, kl = self.layers
        return kh * kl

    def subarray_size(self, N: int) -> int:
        if N % self.n_subarrays:
            raise ValueError(f"{self.label()} needs N divisible by {self.n_subarrays}, got N={N}")
        return N // self.n_subarrays

    @property
    def large_range_ttds(self) -> int:
        return {"ps": 0, "single": self.U, "double": self.K_H}[self.variant]

    @property
    def ttd_count(self) -> int:
        return {"ps": 0, "single": self.U, "double": self.K_H + self.K_H * self.K_L}[self.variant]

    @property
    def total_bits(self) -> int:
        return {"ps": 0, "single": self.U * self.P_s,
                "double": self.K_H * self.P_H + self.K_H * self.K_L * self.P_L}[self.variant]

    def delay_step(self, cfg: SystemConfig) -> Optional[float]:
        return None if self.delay_step_tc is None else self.delay_step_tc * cfg.T_c

    def label(self) -> str:
        if self.variant == "ps":
            return "ps"
        if self.variant == "single":
            return f"single_U{self.U}"
        return f"double_KH{self.K_H}_KL{self.K_L}"

    def to_dict(self) -> dict:
        return {"scheme": self.variant, "U": self.U, "P_s": self.P_s, "K_H": self.K_H, "K_L": self.K_L,
                "P_H": self.P_H, "P_L": self.P_L, "D_over_Tc": self.delay_step_tc, "ps_bits": self.ps_bits}


def antenna_indices(arch: AnalogArchitecture, N: int):
    """Per-antenna (k_h, k_l, p), all 0-based."""
    P = arch.subarray_size(N)
    _, kl = arch.layers
    n = np.arange(N)
    g = n // P
    return g // kl, g % kl, n % P


# --------------------------------------------------------------------------
# Phase compensation and beam split
# --------------------------------------------------------------------------

def ps_phase(n, theta0, cfg: SystemConfig):
    """Phase of the ``n``-th (1-based) PS steering towards ``theta0`` at f_c."""
    return 2 * np.pi * cfg.f_c * (np.asarray(n) - 1) * cfg.T_d * np.sin(theta0)


def wrap_phase(psi):
    return np.mod(psi, 2 * np.pi)


def phase_error(arch: AnalogArchitecture, n, f_m, theta0, cfg: SystemConfig):
    """Residual phase error of antenna ``n`` (1-based) at ``f_m`` with ideal delays."""
    P = arch.subarray_size(cfg.N)
    within = np.mod(np.asarray(n) - 1, P)
    return 2 * np.pi * (np.asarray(f_m) - cfg.f_c) * within * cfg.T_d * np.sin(theta0)


def split_direction(theta0, f_m, cfg: SystemConfig):
    """Direction the PS-only beam actually points to at ``f_m``."""
    arg = cfg.f_c / np.asarray(f_m, dtype=float) * np.sin(theta0)
    if np.any(np.abs(arg) > 1.0):
        raise ValueError(f"beam-split direction undefined: |f_c/f_m sin(theta0)| = {np.max(np.abs(arg)):.6g} > 1")
    return np.arcsin(arg)


# --------------------------------------------------------------------------
# Delays and quantization
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DelayPlan:
    """TTD settings of one RF chain: ``second`` (K_H,), ``first`` (K_H, K_L), seconds."""

    second: np.ndarray
    first: np.ndarray

    def per_antenna(self, arch: AnalogArchitecture, N: int) -> np.ndarray:
        kh, kl, _ = antenna_indices(arch, N)
        return self.second[kh] + self.first[kh, kl]


def _offset(values: np.ndarray, step: Optional[float]) -> float:
    lowest = float(values.min()) if values.size else 0.0
    if lowest >= 0:
        return 0.0
    if step is None:
        return -lowest
    return step * math.ceil(-lowest / step - _TIE_RTOL)


def ideal_delays(arch: AnalogArchitecture, theta0: float, cfg: SystemConfig) -> DelayPlan:
    """Delays that align every subarray head with ``theta0``.

    Negative steering angles get one non-negative offset per layer (a
    multiple of the delay step when quantized). A common delay only adds a
    per-subcarrier phase to the whole chain.
    """
    kh_n, kl_n = arch.layers
    P = arch.subarray_size(cfg.N)
    s = math.sin(theta0)
    second = np.arange(kh_n) * kl_n * P * cfg.T_d * s
    first = np.tile(np.arange(kl_n) * P * cfg.T_d * s, (kh_n, 1))
    if arch.variant == "ps":
        return DelayPlan(np.zeros(1), np.zeros((1, 1)))
    step = arch.delay_step(cfg)
    # residues below the grid tolerance are rounding noise
    second = np.maximum(second + _offset(second, step), 0.0)
    first = np.maximum(first + _offset(first, step), 0.0)
    return DelayPlan(second, first)


def delay_grid(bits: int, D: float) -> np.ndarray:
    return D * np.arange(2 ** bits)


def quantize_delay(tau, bits: int, D: float):
    """Nearest point of ``{0, D, ..., (2^bits - 1) D}``; exact midpoints go down."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("delays must be non-negative")
    top = 2 ** bits - 1
    lo = np.clip(np.floor(tau / D), 0, top)
    hi = np.clip(lo + 1, 0, top)
    d_lo = np.abs(tau - lo * D)
    d_hi = np.abs(tau - hi * D)
    pick_hi = d_hi < d_lo - _TIE_RTOL * D
    out = np.where(pick_hi, hi, lo) * D
    return out if out.ndim else float(out)


def quantize_plan(plan: DelayPlan, arch: AnalogArchitecture, cfg: SystemConfig) -> DelayPlan:
    step = arch.delay_step(cfg)
    if step is None or arch.variant == "ps":
        return plan
    bits_second, bits_first = arch.layer_bits
    return DelayPlan(quantize_delay(plan.second, bits_second, step), quantize_delay(plan.first, bits_first, step))


def quantize_phase(psi, bits: int):
    """Snap phases to the ``2^bits``-point grid (chordal nearest, ties to the lower index).

    Returns ``(phase, index)``; ``bits = 0`` leaves phases untouched (index -1).
    """
    psi = np.asarray(psi, dtype=float)
    if bits == 0:
        return psi, np.full(psi.shape, -1)
    L = 2 ** bits
    q = np.mod(psi, 2 * np.pi) / (2 * np.pi / L)
    lo = np.floor(q)
    d_lo = q - lo
    d_hi = lo + 1 - q
    idx = np.where(d_hi < d_lo - _TIE_RTOL, lo + 1, lo)
    # a tie between index L-1 and L (== 0) goes to index 0
    tie_wrap = (lo == L - 1) & (np.abs(d_hi - d_lo) <= _TIE_RTOL)
    idx = np.where(tie_wrap, L, idx)
    idx = np.mod(idx, L).astype(int)
    return idx * (2 * np.pi / L), idx


def ps_phases(arch: AnalogArchitecture, theta0: float, cfg: SystemConfig, quantized: bool = True) -> np.ndarray:
    """Per-antenna PS phases: the within-subarray progression at f_c."""
    _, _, p = antenna_indices(arch, cfg.N)
    psi = 2 * np.pi * cfg.f_c * p * cfg.T_d * math.sin(theta0)
    if quantized and arch.ps_bits:
        psi, _ = quantize_phase(psi, arch.ps_bits)
    return psi


# --------------------------------------------------------------------------
# Bit budgets
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BitRequirement:
    """Minimum TTD resolution for steering towards a given angle.

    ``no_delay_needed`` is set for broadside, where every bound is void.
    """

    subarray_bound: Optional[int] = None
    P_L: Optional[int] = None
    P_H: Optional[int] = None
    P_s: Optional[int] = None
    no_delay_needed: bool = False


def _ceil_log2(x: float) -> int:
    if x <= 0:
        return 0
    return max(0, math.ceil(math.log2(x) - 1e-9))


def required_bits(arch: AnalogArchitecture, theta0: float, cfg: SystemConfig, D: Optional[float] = None) -> BitRequirement:
    """Bit bounds for the double layer (P bound, P_L, P_H) or the single layer (P_s)."""
    D = cfg.T_c if D is None else D
    s = abs(math.sin(theta0))
    if s < 1e-15:
        return BitRequirement(no_delay_needed=True)
    unit = cfg.T_d * s / D
    if arch.variant == "single":
        S = arch.subarray_size(cfg.N)
        return BitRequirement(P_s=_ceil_log2((arch.U - 1) * S * unit))
    if arch.variant == "double":
        P = arch.subarray_size(cfg.N)
        return BitRequirement(
            subarray_bound=math.floor(1.0 / unit + 1e-9),
            P_L=_ceil_log2((arch.K_L - 1) * P * unit),
            P_H=_ceil_log2((cfg.N - P * arch.K_L) * unit),
        )
    raise ValueError("the PS-only scheme has no TTDs")


def bit_ratio(K_H: int, P_H: int, K_L: int, P_L: int, U: int, P_s: int) -> float:
    """Total double-layer TTD bits over total single-layer TTD bits."""
    return (K_H * P_H + K_H * K_L * P_L) / (U * P_s)


def delay_ranges_tc(arch: AnalogArchitecture, cfg: SystemConfig) -> dict:
    """Upper end of each layer's delay range, in units of T_c."""
    P = arch.subarray_size(cfg.N)
    ratio = cfg.T_d / cfg.T_c
    if arch.variant == "single":
        return {"tau_u": (arch.U - 1) * P * ratio}
    if arch.variant == "double":
        return {"tau_second": (arch.K_H - 1) * arch.K_L * P * ratio,
                "tau_first": (arch.K_L - 1) * P * ratio}
    return {}


# --------------------------------------------------------------------------
# Single-chain steering and array gain
# --------------------------------------------------------------------------

def steering_weights(arch: AnalogArchitecture, theta0: float, f_m, cfg: SystemConfig, quantized: bool = False) -> np.ndarray:
    """Unit-norm analog weights of one RF chain evaluated at ``f_m``.

    With ``quantized=False`` delays are ideal and PSs continuous, whatever
    the architecture's resolution. ``f_m`` may be an array; the antenna axis
    is appended last.
    """
    plan = ideal_delays(arch, theta0, cfg)
    if quantized:
        plan = quantize_plan(plan, arch, cfg)
    tau = plan.per_antenna(arch, cfg.N)
    psi = ps_phases(arch, theta0, cfg, quantized=quantized)
    f_m = np.asarray(f_m, dtype=float)
    return np.exp(1j * (2 * np.pi * f_m[..., None] * tau + psi)) / np.sqrt(cfg.N)


def dirichlet(x, N: int):
    """``sin(pi N x / 2) / sin(pi x / 2)`` with the removable singularity filled by ``N``."""
    x = np.asarray(x, dtype=float)
    den = np.sin(np.pi * x / 2)
    small = np.abs(den) < 1e-12
    safe = np.where(small, 1.0, den)
    return np.where(small, float(N), np.sin(np.pi * N * x / 2) / safe)


def gain_closed_form(arch: AnalogArchitecture, f_m, theta0, cfg: SystemConfig):
    """Normalized array gain from the Dirichlet kernel of one PS subarray."""
    P = arch.subarray_size(cfg.N)
    zeta = np.asarray(f_m, dtype=float) / cfg.f_c
    # 2 f_c T_d = 1 at half-wavelength spacing
    x = 2 * cfg.f_c * cfg.T_d * (zeta - 1) * np.sin(theta0)
    return arch.n_subarrays / cfg.N * np.abs(dirichlet(x, P))


def gain_brute_force(arch: AnalogArchitecture, f_m, theta0: float, cfg: SystemConfig,
                     direction=None, quantized: bool = False):
    """``|a(direction, f_m)^H w(f_m)|`` with ``w`` steered to ``theta0``."""
    direction = theta0 if direction is None else direction
    w = steering_weights(arch, theta0, f_m, cfg, quantized=quantized)
    a = ula_response(direction, np.asarray(f_m, dtype=float), cfg.N, cfg)
    return np.abs(np.sum(a.conj() * w, axis=-1))


# --------------------------------------------------------------------------
# Multi-chain analog beamformer F = F_A F_L F_H
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AnalogBeamformer:
    """Quantized fully-connected analog beamformer, one full TTD tree per RF chain.

    ``tau_second`` (N_RF, K_H), ``tau_first`` (N_RF, K_H, K_L) in seconds,
    ``ps_phase`` (N_RF, N) in radians. Every chain drives all N antennas.
    """

    arch: AnalogArchitecture
    N: int
    angles: np.ndarray
    tau_second: np.ndarray
    tau_first: np.ndarray
    ps_phase: np.ndarray
    antenna_delay: np.ndarray = field(repr=False)

    @property
    def N_RF(self) -> int:
        return self.tau_second.shape[0]

    @property
    def subarray_size(self) -> int:
        return self.arch.subarray_size(self.N)

    @property
    def F_A(self) -> np.ndarray:
        """Frequency-flat PS matrix, shape (N, N_RF * K_H * K_L)."""
        kh, kl = self.arch.layers
        P = self.subarray_size
        G = kh * kl
        out = np.zeros((self.N, self.N_RF * G), dtype=complex)
        n = np.arange(self.N)
        for r in range(self.N_RF):
            out[n, r * G + n // P] = np.exp(1j * self.ps_phase[r]) / np.sqrt(P)
        return out

    def F_L(self, f_m: float) -> np.ndarray:
        """First-layer TTD matrix, shape (N_RF K_H K_L, N_RF K_H)."""
        kh, kl = self.arch.layers
        out = np.zeros((self.N_RF * kh * kl, self.N_RF * kh), dtype=complex)
        rows = np.arange(self.N_RF * kh * kl)
        out[rows, rows // kl] = np.exp(2j * np.pi * f_m * self.tau_first.reshape(-1))
        return out

    def F_H(self, f_m: float) -> np.ndarray:
        """Second-layer TTD matrix, shape (N_RF K_H, N_RF)."""
        kh, _ = self.arch.layers
        out = np.zeros((self.N_RF * kh, self.N_RF), dtype=complex)
        rows = np.arange(self.N_RF * kh)
        out[rows, rows // kh] = np.exp(2j * np.pi * f_m * self.tau_second.reshape(-1))
        return out

    def compose(self, f_m) -> np.ndarray:
        """``F_m`` of shape (N, N_RF); for an array of frequencies (M, N, N_RF)."""
        f_m = np.asarray(f_m, dtype=float)
        phase = 2 * np.pi * f_m[..., None, None] * self.antenna_delay[None] + self.ps_phase[None]
        F = np.exp(1j * phase) / np.sqrt(self.subarray_size)
        F = np.swapaxes(F, -1, -2)
        return F[0] if f_m.ndim == 0 else F


def build_analog_beamformer(arch: AnalogArchitecture, angles: Sequence[float], cfg: SystemConfig) -> AnalogBeamformer:
    """Point RF chain ``r`` at ``angles[r]`` and quantize its delays and phases."""
    angles = np.asarray(angles, dtype=float).reshape(-1)
    if angles.size != cfg.N_RF:
        raise ValueError(f"expected {cfg.N_RF} steering angles (one per RF chain), got {angles.size}")
    arch.subarray_size(cfg.N)
    seconds, firsts, phases, delays = [], [], [], []
    for theta in angles:
        plan = quantize_plan(ideal_delays(arch, theta, cfg), arch, cfg)
        seconds.append(plan.second)
        firsts.append(plan.first)
        delays.append(plan.per_antenna(arch, cfg.N))
        phases.append(ps_phases(arch, theta, cfg, quantized=True))
    return AnalogBeamformer(
        arch=arch, N=cfg.N, angles=angles,
        tau_second=np.array(seconds), tau_first=np.array(firsts),
        ps_phase=np.array(phases), antenna_delay=np.array(delays),
    )
