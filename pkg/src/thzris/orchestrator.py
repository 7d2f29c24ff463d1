"""Joint design: analog front end from RIS geometry, then alternating WMMSE / RIS rounds."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .analog import AnalogArchitecture, AnalogBeamformer, build_analog_beamformer, delay_ranges_tc
from .channel import ChannelSet, GainModel, Scenario, SystemConfig, generate_channels
from .metrics import rate, sinr, sum_rate
from .ris import ReflectionConfig, optimize_reflection
from .wmmse import matched_filter_init, scale_to_power, wmmse_solve

__all__ = [
    "SolveResult", "sinr", "sum_rate", "solve", "joint_optimize", "evaluate_rate",
    "hardware_report", "complexity_report",
]

OUTER_TOL = 1e-4


@dataclass
class SolveResult:
    F: np.ndarray
    d: np.ndarray
    reflection: ReflectionConfig
    rate_trace: List[float]
    wmmse_traces: List[List[float]] = field(default_factory=list)
    ris_traces: List[List[float]] = field(default_factory=list)
    counters: dict = field(default_factory=dict)
    hardware: dict = field(default_factory=dict)
    beamformer: Optional[AnalogBeamformer] = None

    @property
    def rate(self) -> float:
        return self.rate_trace[-1]

    @property
    def rate_per_subcarrier(self) -> float:
        return self.rate_trace[-1] / self.F.shape[0]


def evaluate_rate(channels: ChannelSet, F: np.ndarray, reflection, d: np.ndarray, sigma2) -> float:
    """Sum rate of a fixed design ``(F, Theta, d)`` over ``channels``."""
    h_eff = np.einsum("mkn,mnc->mkc", channels.effective(reflection), F)
    return rate(h_eff, d, sigma2)


def solve(channels: ChannelSet, F: np.ndarray, cfg: SystemConfig, I_max: int = 10, I_d: int = 5,
          I_o: int = 5, Q: int = 1, d_init: Optional[np.ndarray] = None,
          reflection_init: Optional[ReflectionConfig] = None, tol: float = OUTER_TOL,
          wmmse_tol: float = 1e-4) -> SolveResult:
    """Alternate digital precoding and RIS phase updates on fixed analog matrices ``F`` (M, N, N_RF)."""
    n_el = channels.R * channels.N_RIS
    refl = reflection_init if reflection_init is not None else ReflectionConfig.all_ones(n_el, Q)

    def h_eff_of(r):
        return np.einsum("mkn,mnc->mkc", channels.effective(r), F)

    h_eff = h_eff_of(refl)
    if d_init is None:
        d = matched_filter_init(h_eff, F, cfg.P_max)
    else:
        d = scale_to_power(np.array(d_init, dtype=complex), F, cfg.P_max, equality=False)
    trace = [rate(h_eff, d, cfg.sigma2)]
    wmmse_traces, ris_traces = [], []
    counters = {"outer_iterations": 0, "wmmse_iterations": 0, "ris_passes": 0, "ris_evaluations": 0}
    for _ in range(I_max):
        wm = wmmse_solve(h_eff, F, cfg.P_max, cfg.sigma2, d_init=d, max_iter=I_d, tol=wmmse_tol)
        d = wm.d
        wmmse_traces.append(wm.rate_trace)
        counters["wmmse_iterations"] += wm.iterations

        rr = optimize_reflection(channels, F, d, cfg.sigma2, reflection_init=refl, I_o=I_o, Q=refl.Q)
        refl = rr.reflection
        ris_traces.append(rr.rate_trace)
        counters["ris_passes"] += rr.passes
        counters["ris_evaluations"] += rr.evaluations
        counters["outer_iterations"] += 1

        h_eff = h_eff_of(refl)
        trace.append(rate(h_eff, d, cfg.sigma2))
        prev = trace[-2]
        if abs(trace[-1] - prev) <= tol * max(abs(prev), 1e-300):
            break
    return SolveResult(F=F, d=d, reflection=refl, rate_trace=trace, wmmse_traces=wmmse_traces,
                       ris_traces=ris_traces, counters=counters)


def joint_optimize(scenario: Scenario, cfg: SystemConfig, arch: AnalogArchitecture,
                   gain_model: GainModel = GainModel("free_space"), I_max: int = 10, I_d: int = 5,
                   I_o: int = 5, Q: int = 1, seed: Optional[int] = None,
                   channels: Optional[ChannelSet] = None) -> SolveResult:
    """Build channels and the analog beamformer from the geometry, then run :func:`solve`.

    ``seed`` overrides the gain model's seed (only the complex-Gaussian law is random).
    """
    if channels is None:
        if seed is not None:
            gain_model = GainModel(gain_model.kind, seed, gain_model.offset_db)
        channels = generate_channels(scenario, cfg, gain_model)
    bf = build_analog_beamformer(arch, scenario.bs_angles(), cfg)
    F = bf.compose(channels.frequencies)
    res = solve(channels, F, cfg, I_max=I_max, I_d=I_d, I_o=I_o, Q=Q)
    res.beamformer = bf
    res.hardware = hardware_report(arch, cfg)
    return res


def hardware_report(arch: AnalogArchitecture, cfg: SystemConfig) -> dict:
    """TTD counts, bits and delay ranges for all ``N_RF`` chains."""
    out = {
        "scheme": arch.label(),
        "large_range_ttds": cfg.N_RF * arch.large_range_ttds,
        "total_ttds": cfg.N_RF * arch.ttd_count,
        "total_bits": cfg.N_RF * arch.total_bits,
    }
    out.update({f"{k}_max_Tc": v for k, v in delay_ranges_tc(arch, cfg).items()})
    return out


def complexity_report(cfg: SystemConfig, arch: AnalogArchitecture, I_max: int = 10, I_d: int = 5,
                      I_o: int = 5, Q: int = 1) -> dict:
    """Operation-count estimate of the joint design plus the hardware rows."""
    digital = I_d * cfg.M * cfg.N ** 2
    reflection = I_o * 2 ** Q * cfg.K * cfg.N * cfg.R * cfg.N_RIS
    out = {
        "digital_ops": I_max * digital,
        "reflection_ops": I_max * reflection,
        "total_ops": I_max * (digital + reflection),
        "reflection_evaluations_per_pass": 2 ** Q * cfg.R * cfg.N_RIS,
    }
    out.update(hardware_report(arch, cfg))
    return out
