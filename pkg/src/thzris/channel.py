"""Wideband geometric channels for the BS -> RIS -> user downlink.

Conventions used throughout the package:

* The BS is an ``N``-element ULA laid along the x-axis. The departure angle
  towards a node satisfies ``sin(theta) = e_x`` where ``e`` is the unit vector
  from the BS to that node.
* Every RIS lies in the y-z plane. Its first grid index ``m_x`` runs along +y,
  its second index ``m_y`` runs along -z (top row first). A unit direction
  ``e`` seen from the RIS is decomposed as
  ``(e_y, -e_z, e_x) = (cos u sin v, cos v, sin u sin v)``.
* RIS elements are flattened row-major over ``(m_x, m_y)`` with 0-based
  phase indices.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

GAIN_MODELS = ("unit_gain", "free_space", "complex_gaussian")


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def watt_to_dbm(watt: float) -> float:
    return 10.0 * np.log10(watt * 1000.0)


@dataclass(frozen=True)
class SystemConfig:
    """Carrier, array, power and noise parameters.

    Defaults reproduce the default simulation setup: 128-antenna BS at
    300 GHz with 30 GHz bandwidth over 8 subcarriers, 4 users, 4 RISs of
    4x4 elements, 10 dBm transmit power and -85 dBm noise.
    """

    f_c: float = 300e9
    B: float = 30e9
    M: int = 8
    N: int = 128
    N_RF: int = 4
    K: int = 4
    R: int = 4
    M_x: int = 4
    M_y: int = 4
    P_max: float = dbm_to_watt(10.0)
    sigma2: float = dbm_to_watt(-85.0)
    d_spacing: Optional[float] = None

    def __post_init__(self):
        if not (np.isfinite(self.f_c) and self.f_c > 0):
            raise ValueError(f"f_c must be positive, got {self.f_c}")
        if not (0 <= self.B < 2 * self.f_c):
            raise ValueError(f"B must satisfy 0 <= B < 2 f_c, got {self.B}")
        for name in ("M", "N", "N_RF", "M_x", "M_y"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.K < 0 or self.R < 1:
            raise ValueError("K must be >= 0 and R >= 1")
        if self.N_RF != self.R:
            raise ValueError(f"N_RF ({self.N_RF}) must equal the RIS count R ({self.R})")
        if not (self.P_max > 0 and self.sigma2 > 0):
            raise ValueError("P_max and sigma2 must be positive")
        if self.d_spacing is None:
            object.__setattr__(self, "d_spacing", self.wavelength / 2.0)
        elif not self.d_spacing > 0:
            raise ValueError("d_spacing must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    @property
    def T_d(self) -> float:
        """Propagation delay between two consecutive BS antennas."""
        return self.d_spacing / SPEED_OF_LIGHT

    @property
    def T_c(self) -> float:
        return 1.0 / self.f_c

    @property
    def N_RIS(self) -> int:
        return self.M_x * self.M_y

    def replace(self, **changes) -> "SystemConfig":
        if "f_c" in changes and "d_spacing" not in changes:
            changes["d_spacing"] = None
        return dataclasses.replace(self, **changes)


def subcarrier_frequencies(cfg: SystemConfig) -> np.ndarray:
    m = np.arange(1, cfg.M + 1)
    return cfg.f_c + (cfg.B / cfg.M) * (m - 1 - (cfg.M - 1) / 2.0)


def ula_response(theta, f, N: int, cfg: SystemConfig) -> np.ndarray:
    """BS array response ``a(theta)`` at frequency ``f`` (unit norm).

    ``theta`` and ``f`` broadcast; the antenna axis is appended last.
    """
    theta = np.asarray(theta, dtype=float)
    f = np.asarray(f, dtype=float)
    n = np.arange(N)
    phase = 2 * np.pi * cfg.d_spacing * (f / SPEED_OF_LIGHT)[..., None] * n * np.sin(theta)[..., None]
    return np.exp(1j * phase) / np.sqrt(N)


def upa_response(u, v, f, M_x: int, M_y: int, cfg: SystemConfig) -> np.ndarray:
    """RIS array response ``b(u, v)`` at frequency ``f``, row-major over (m_x, m_y)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    f = np.asarray(f, dtype=float)
    mx, my = np.meshgrid(np.arange(M_x), np.arange(M_y), indexing="ij")
    mx = mx.ravel()
    my = my.ravel()
    kx = (np.cos(u) * np.sin(v))[..., None]
    ky = np.cos(v)[..., None]
    phase = 2 * np.pi * cfg.d_spacing * (f / SPEED_OF_LIGHT)[..., None] * (mx * kx + my * ky)
    return np.exp(1j * phase) / np.sqrt(M_x * M_y)


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec, axis=-1, keepdims=True)
    if np.any(norm <= 1e-9):
        raise ValueError("coincident nodes: direction undefined")
    return vec / norm


def _ris_local_angles(e: np.ndarray):
    """Decompose unit directions (..., 3) seen from a RIS into (u, v)."""
    e_a, e_b, e_n = e[..., 1], -e[..., 2], e[..., 0]
    if np.any(e_b < -1e-12):
        raise ValueError(
            "node above a RIS: the RIS column axis points downwards and the "
            "elevation would leave [-pi/2, pi/2]"
        )
    e_b = np.clip(e_b, 0.0, 1.0)
    sgn = np.where(e_a < 0, -1.0, 1.0)
    v = sgn * np.arccos(e_b)
    u = np.arctan2(sgn * e_n, np.abs(e_a))
    return u, v


@dataclass(frozen=True)
class Scenario:
    """Node positions in metres; all angles are derived on demand."""

    bs_position: np.ndarray
    ris_positions: np.ndarray
    user_positions: np.ndarray

    def __post_init__(self):
        bs = np.asarray(self.bs_position, dtype=float).reshape(3)
        ris = np.asarray(self.ris_positions, dtype=float).reshape(-1, 3)
        users = np.asarray(self.user_positions, dtype=float).reshape(-1, 3)
        for arr in (bs, ris, users):
            if not np.all(np.isfinite(arr)):
                raise ValueError("positions must be finite")
            arr.setflags(write=False)
        object.__setattr__(self, "bs_position", bs)
        object.__setattr__(self, "ris_positions", ris)
        object.__setattr__(self, "user_positions", users)

    @property
    def R(self) -> int:
        return self.ris_positions.shape[0]

    @property
    def K(self) -> int:
        return self.user_positions.shape[0]

    def bs_ris_distances(self) -> np.ndarray:
        return np.linalg.norm(self.ris_positions - self.bs_position, axis=-1)

    def ris_user_distances(self) -> np.ndarray:
        """Shape (R, K)."""
        return np.linalg.norm(self.user_positions[None] - self.ris_positions[:, None], axis=-1)

    def bs_user_distances(self) -> np.ndarray:
        return np.linalg.norm(self.user_positions - self.bs_position, axis=-1)

    def bs_angles(self) -> np.ndarray:
        """LoS departure angle from the BS towards each RIS, shape (R,)."""
        e = _unit(self.ris_positions - self.bs_position)
        return np.arcsin(np.clip(e[:, 0], -1.0, 1.0))

    def bs_user_angles(self) -> np.ndarray:
        """Direct-link departure angle towards each user, shape (K,)."""
        e = _unit(self.user_positions - self.bs_position)
        return np.arcsin(np.clip(e[:, 0], -1.0, 1.0))

    def ris_arrival_angles(self):
        """(u, v) of the BS as seen from each RIS, each of shape (R,)."""
        return _ris_local_angles(_unit(self.bs_position - self.ris_positions))

    def ris_departure_angles(self):
        """(u, v) of each user as seen from each RIS, each of shape (R, K)."""
        return _ris_local_angles(_unit(self.user_positions[None] - self.ris_positions[:, None]))


@dataclass(frozen=True)
class GainModel:
    """Path-gain law for the LoS hops.

    ``unit_gain``: alpha = 1, tau = 0.
    ``free_space``: alpha = g * c / (4 pi f_c dist), tau = dist / c, where
    ``g = 10**(offset_db / 20)`` is a per-hop link-budget offset.
    ``complex_gaussian``: alpha ~ CN(0, 1) drawn from ``seed``, tau = dist / c.
    """

    kind: str = "unit_gain"
    seed: Optional[int] = None
    offset_db: float = 0.0

    def __post_init__(self):
        if self.kind not in GAIN_MODELS:
            raise ValueError(f"unknown gain model {self.kind!r}; expected one of {GAIN_MODELS}")

    def hop_gains(self, distances: np.ndarray, cfg: SystemConfig, rng: np.random.Generator):
        distances = np.asarray(distances, dtype=float)
        if self.kind == "unit_gain":
            return np.ones(distances.shape, dtype=complex), np.zeros(distances.shape)
        tau = distances / SPEED_OF_LIGHT
        if self.kind == "free_space":
            scale = 10.0 ** (self.offset_db / 20.0)
            return (scale * SPEED_OF_LIGHT / (4 * np.pi * cfg.f_c * distances)).astype(complex), tau
        alpha = (rng.standard_normal(distances.shape) + 1j * rng.standard_normal(distances.shape)) / np.sqrt(2)
        return alpha, tau


@dataclass(frozen=True)
class ChannelSet:
    """Per-subcarrier BS->RIS matrices ``G`` (R, M, N_RIS, N) and RIS->user rows ``f`` (R, M, K, N_RIS)."""

    G: np.ndarray
    f: np.ndarray
    frequencies: np.ndarray

    @property
    def R(self) -> int:
        return self.G.shape[0]

    @property
    def M(self) -> int:
        return self.G.shape[1]

    @property
    def N_RIS(self) -> int:
        return self.G.shape[2]

    @property
    def N(self) -> int:
        return self.G.shape[3]

    @property
    def K(self) -> int:
        return self.f.shape[2]

    def effective(self, theta) -> np.ndarray:
        return effective_channel(self, theta)


def generate_channels(scenario: Scenario, cfg: SystemConfig, gain_model: GainModel = GainModel()) -> ChannelSet:
    """LoS (L_1 = L_2 = 1) geometric channels for every RIS, subcarrier and user."""
    if scenario.R != cfg.R or scenario.K != cfg.K:
        raise ValueError(
            f"scenario has R={scenario.R}, K={scenario.K} but config expects R={cfg.R}, K={cfg.K}"
        )
    rng = np.random.default_rng(gain_model.seed)
    freqs = subcarrier_frequencies(cfg)

    theta = scenario.bs_angles()
    u1, v1 = scenario.ris_arrival_angles()
    alpha1, tau1 = gain_model.hop_gains(scenario.bs_ris_distances(), cfg, rng)
    # (R, M, N)
    a = ula_response(theta[:, None], freqs[None, :], cfg.N, cfg)
    # (R, M, N_RIS)
    b_in = upa_response(u1[:, None], v1[:, None], freqs[None, :], cfg.M_x, cfg.M_y, cfg)
    delay1 = alpha1[:, None] * np.exp(-2j * np.pi * tau1[:, None] * freqs[None, :])
    G = delay1[..., None, None] * b_in[..., :, None] * a.conj()[..., None, :]

    if cfg.K:
        u2, v2 = scenario.ris_departure_angles()
        alpha2, tau2 = gain_model.hop_gains(scenario.ris_user_distances(), cfg, rng)
        # (R, M, K, N_RIS)
        b_out = upa_response(u2[:, None, :], v2[:, None, :], freqs[None, :, None], cfg.M_x, cfg.M_y, cfg)
        delay2 = alpha2[:, None, :] * np.exp(-2j * np.pi * tau2[:, None, :] * freqs[None, :, None])
        f = delay2[..., None] * b_out
    else:
        f = np.zeros((cfg.R, cfg.M, 0, cfg.N_RIS), dtype=complex)
    return ChannelSet(G=G, f=f, frequencies=freqs)


def effective_channel(channels: ChannelSet, theta) -> np.ndarray:
    """``h[m, k] = sum_r f[r, m, k] Phi_r G[r, m]``; returns shape (M, K, N).

    ``theta`` is a ReflectionConfig or a flat vector of R * N_RIS coefficients.
    """
    phases = np.asarray(getattr(theta, "phases", theta))
    if phases.size != channels.R * channels.N_RIS:
        raise ValueError(
            f"reflection has {phases.size} coefficients, channels need {channels.R * channels.N_RIS}"
        )
    phi = phases.reshape(channels.R, channels.N_RIS)
    return np.einsum("rmki,ri,rmin->mkn", channels.f, phi, channels.G)


def los_channel_single(theta0, alpha, tau, f_m, N: int, cfg: SystemConfig) -> np.ndarray:
    """Single-path BS -> user row vector ``alpha e^{-j 2 pi tau f_m} a(theta0)^H``."""
    a = ula_response(theta0, f_m, N, cfg)
    return (np.asarray(alpha) * np.exp(-2j * np.pi * np.asarray(tau) * np.asarray(f_m)))[..., None] * a.conj()


def direct_channels(scenario: Scenario, cfg: SystemConfig, gain_model: GainModel = GainModel()) -> np.ndarray:
    """BS -> user LoS channels without any RIS, shape (M, K, N)."""
    rng = np.random.default_rng(gain_model.seed)
    freqs = subcarrier_frequencies(cfg)
    theta = scenario.bs_user_angles()
    alpha, tau = gain_model.hop_gains(scenario.bs_user_distances(), cfg, rng)
    return los_channel_single(theta[None, :], alpha[None, :], tau[None, :], freqs[:, None], cfg.N, cfg)


def _perturb(x: np.ndarray, delta: float, rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
    return x + np.sqrt(delta / 2.0) * np.abs(x) * noise


def apply_csi_error(channels: ChannelSet, delta: float, seed=None) -> ChannelSet:
    """Entrywise estimation error ``e ~ CN(0, delta |h|^2)`` on every G and f coefficient."""
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    if delta == 0:
        return channels
    rng = np.random.default_rng(seed)
    return ChannelSet(G=_perturb(channels.G, delta, rng), f=_perturb(channels.f, delta, rng), frequencies=channels.frequencies)


def perturb_coefficients(h: np.ndarray, delta: float, seed=None) -> np.ndarray:
    """Same error law applied to an arbitrary coefficient array."""
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    if delta == 0:
        return np.asarray(h)
    return _perturb(np.asarray(h, dtype=complex), delta, np.random.default_rng(seed))


# Default geometry of the simulation section.
DEFAULT_BS_POSITION = (50.0, 0.0, 3.0)
DEFAULT_RIS_POSITIONS = ((0.0, 80.0, 6.0), (0.0, 80.0, 8.0), (0.0, 85.0, 6.0), (0.0, 85.0, 8.0))
DEFAULT_USER_CENTER = (0.0, 85.0, 0.0)
DEFAULT_USER_RADIUS = 1.0


def random_user_positions(K: int, rng: np.random.Generator, center=DEFAULT_USER_CENTER, radius=DEFAULT_USER_RADIUS) -> np.ndarray:
    """Users drawn uniformly over a horizontal disk."""
    r = radius * np.sqrt(rng.uniform(size=K))
    phi = rng.uniform(0.0, 2 * np.pi, size=K)
    center = np.asarray(center, dtype=float)
    pos = np.tile(center, (K, 1))
    pos[:, 0] += r * np.cos(phi)
    pos[:, 1] += r * np.sin(phi)
    return pos


def default_scenario(user_positions=None, rng: Optional[np.random.Generator] = None, K: int = 4) -> Scenario:
    if user_positions is None:
        user_positions = random_user_positions(K, rng if rng is not None else np.random.default_rng(0))
    return Scenario(np.array(DEFAULT_BS_POSITION), np.array(DEFAULT_RIS_POSITIONS), user_positions)
