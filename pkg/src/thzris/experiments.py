"""Experiment runner: TOML spec in, CSV series plus a JSON manifest out.

Spec file layout (every section optional)::

    experiment = "rate_vs_power"      # required
    trials = 100
    seed = 0

    [system]      # SystemConfig fields; P_max_dBm / sigma2_dBm accepted
    [solver]      # I_max, I_d, I_o, Q
    [scenario]    # gain_model, offset_db, bs_position, ris_positions,
                  # user_center, user_radius, user_positions, link
    [[scheme]]    # scheme = "ps" | "single_ttd" | "double_ttd", U, P_s,
                  # K_H, K_L, P_H, P_L, D_over_Tc ("continuous" or number), ps_bits, label
    [sweep]       # axis name -> list of values (cartesian product)

Monte-Carlo trial ``t`` draws its users from ``SeedSequence([seed, t])``,
so every scheme and every sweep point sees the same user drops.
"""
from __future__ import annotations

import dataclasses
import itertools
import json
import math
import os
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .analog import (AnalogArchitecture, build_analog_beamformer, gain_brute_force, ideal_delays,
                     phase_error, ps_phases, quantize_plan)
from .channel import (DEFAULT_BS_POSITION, DEFAULT_RIS_POSITIONS, DEFAULT_USER_CENTER, DEFAULT_USER_RADIUS,
                      GainModel, Scenario, SystemConfig, apply_csi_error, dbm_to_watt, direct_channels,
                      generate_channels, random_user_positions, subcarrier_frequencies)
from .orchestrator import complexity_report, evaluate_rate, joint_optimize
from .wmmse import wmmse_solve

OUT_DIR_ENV = "THZRIS_OUT_DIR"

# Per-hop link-budget offset applied on top of the free-space law. Chosen once
# so the single-layer U=32 scheme lands near 3.36 bit/s/Hz per subcarrier.
DEFAULT_LINK_BUDGET_DB = 69.55

EXPERIMENTS = (
    "phase_compensation", "phase_error", "gain_vs_subcarrier", "rate_vs_power",
    "inner_convergence", "outer_convergence", "hardware_table", "rate_vs_ris_elements",
    "rate_vs_csi_error",
)

_SCHEME_NAMES = {"ps": "ps", "ps_only": "ps", "single_ttd": "single", "single": "single",
                 "double_ttd": "double", "double": "double"}


class SpecError(ValueError):
    """Invalid experiment spec; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class NumericalError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# Spec
# --------------------------------------------------------------------------

@dataclass
class SchemeSpec:
    arch: AnalogArchitecture
    label: str

    def columns(self) -> dict:
        D = self.arch.delay_step_tc
        return {"scheme": self.label, "D_over_Tc": "continuous" if D is None else D,
                "ps_bits": self.arch.ps_bits}


@dataclass
class ExperimentSpec:
    experiment: str
    system: dict = field(default_factory=dict)
    schemes: List[SchemeSpec] = field(default_factory=list)
    scenario: dict = field(default_factory=dict)
    sweep: Dict[str, list] = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    trials: int = 100
    seed: int = 0
    out: Optional[str] = None
    raw: dict = field(default_factory=dict)

    def config(self, point: Optional[dict] = None) -> SystemConfig:
        return build_config({**self.system, **_system_keys(point or {})})

    def grid(self) -> List[dict]:
        if not self.sweep:
            return [{}]
        keys = list(self.sweep)
        return [dict(zip(keys, vals)) for vals in itertools.product(*(self.sweep[k] for k in keys))]


_SYSTEM_FIELDS = {f.name for f in dataclasses.fields(SystemConfig)}
_SOLVER_DEFAULTS = {"I_max": 10, "I_d": 5, "I_o": 5, "Q": 1}


def _system_keys(d: dict) -> dict:
    keys = _SYSTEM_FIELDS | {"P_max_dBm", "sigma2_dBm", "ris_side"}
    return {k: v for k, v in d.items() if k in keys}


def build_config(values: dict) -> SystemConfig:
    values = dict(values)
    if "P_max_dBm" in values:
        values["P_max"] = dbm_to_watt(float(values.pop("P_max_dBm")))
    if "sigma2_dBm" in values:
        values["sigma2"] = dbm_to_watt(float(values.pop("sigma2_dBm")))
    if "ris_side" in values:
        side = int(values.pop("ris_side"))
        values["M_x"] = values["M_y"] = side
    for k in values:
        if k not in _SYSTEM_FIELDS:
            raise SpecError(f"system.{k}", "unknown system parameter")
    if "R" in values and "N_RF" not in values:
        values["N_RF"] = values["R"]
    try:
        return SystemConfig(**values)
    except (TypeError, ValueError) as exc:
        raise SpecError("system", str(exc)) from None


def parse_scheme(entry: dict, where: str = "scheme") -> SchemeSpec:
    entry = dict(entry)
    kind = entry.pop("scheme", None)
    if kind not in _SCHEME_NAMES:
        raise SpecError(f"{where}.scheme", f"expected one of {sorted(_SCHEME_NAMES)}, got {kind!r}")
    label = entry.pop("label", None)
    D = entry.pop("D_over_Tc", 1.0)
    if isinstance(D, str):
        if D != "continuous":
            raise SpecError(f"{where}.D_over_Tc", "must be a positive number or 'continuous'")
        D = None
    allowed = {"ps": {"ps_bits"}, "single": {"U", "P_s", "ps_bits"},
               "double": {"K_H", "K_L", "P_H", "P_L", "ps_bits"}}[_SCHEME_NAMES[kind]]
    for k in entry:
        if k not in allowed:
            raise SpecError(f"{where}.{k}", f"not a parameter of the {kind} scheme")
    variant = _SCHEME_NAMES[kind]
    try:
        if variant == "ps":
            arch = AnalogArchitecture.ps_only(**entry)
        elif variant == "single":
            arch = AnalogArchitecture.single_layer(delay_step_tc=D, **entry)
        else:
            arch = AnalogArchitecture.double_layer(delay_step_tc=D, **entry)
    except (TypeError, ValueError) as exc:
        raise SpecError(where, str(exc)) from None
    return SchemeSpec(arch, label or _default_label(arch))


def _default_label(arch: AnalogArchitecture) -> str:
    if arch.variant == "ps":
        return "ps"
    D = arch.delay_step_tc
    return f"{arch.label()}_D{'cont' if D is None else format(D, 'g')}"


def _scheme(kind, D=0.15, ps_bits=0, **kw) -> SchemeSpec:
    return parse_scheme({"scheme": kind, "D_over_Tc": D, "ps_bits": ps_bits, **kw})


def default_schemes(experiment: str, link: str = "ris") -> List[SchemeSpec]:
    if experiment in ("phase_compensation", "phase_error", "gain_vs_subcarrier"):
        return [_scheme("ps"), _scheme("single_ttd", "continuous", U=32, P_s=8),
                _scheme("double_ttd", "continuous", K_H=8, K_L=4)]
    if experiment == "rate_vs_power" and link == "direct":
        out = [_scheme("ps")]
        for D in ("continuous", 0.15, 0.25):
            out += [_scheme("single_ttd", D, U=32, P_s=8), _scheme("double_ttd", D, K_H=8, K_L=4)]
        return out
    if experiment == "rate_vs_ris_elements":
        return [_scheme("double_ttd", K_H=8, K_L=4)]
    if experiment == "hardware_table":
        return [_scheme("single_ttd", U=32, P_s=8), _scheme("double_ttd", K_H=8, K_L=4),
                _scheme("double_ttd", K_H=8, K_L=2)]
    bits = 1 if experiment == "rate_vs_csi_error" else 0
    return [_scheme("ps", ps_bits=bits), _scheme("single_ttd", U=32, P_s=8, ps_bits=bits),
            _scheme("double_ttd", K_H=8, K_L=4, ps_bits=bits), _scheme("double_ttd", K_H=8, K_L=2, ps_bits=bits)]


def default_sweep(experiment: str) -> Dict[str, list]:
    return {
        "phase_compensation": {"theta0_rad": [math.pi / 4], "f_m_Hz": [315e9]},
        "phase_error": {"theta0_rad": [math.pi / 4], "f_m_Hz": [315e9]},
        "gain_vs_subcarrier": {"theta0_rad": [math.pi / 4]},
        "rate_vs_power": {"P_max_dBm": [0.0, 5.0, 10.0, 15.0, 20.0]},
        "rate_vs_ris_elements": {"ris_side": [2, 4, 6], "P_max_dBm": [0.0, 10.0, 20.0]},
        "rate_vs_csi_error": {"delta": [0.0, 0.1, 0.2, 0.3]},
    }.get(experiment, {})


def spec_from_dict(data: dict) -> ExperimentSpec:
    data = dict(data)
    exp = data.get("experiment")
    if exp not in EXPERIMENTS:
        raise SpecError("experiment", f"expected one of {list(EXPERIMENTS)}, got {exp!r}")
    known = {"experiment", "trials", "seed", "out", "system", "scheme", "scenario", "sweep", "solver"}
    for k in data:
        if k not in known:
            raise SpecError(k, "unknown top-level key")
    system = dict(data.get("system", {}))
    build_config(system)  # validate early
    scenario = dict(data.get("scenario", {}))
    link = scenario.get("link", "ris")
    if link not in ("ris", "direct"):
        raise SpecError("scenario.link", "must be 'ris' or 'direct'")
    raw_schemes = data.get("scheme")
    if raw_schemes is None:
        schemes = default_schemes(exp, link)
    else:
        if isinstance(raw_schemes, dict):
            raw_schemes = [raw_schemes]
        schemes = [parse_scheme(s, f"scheme[{i}]") for i, s in enumerate(raw_schemes)]
    sweep = data.get("sweep")
    sweep = default_sweep(exp) if sweep is None else dict(sweep)
    for k, v in sweep.items():
        if not isinstance(v, list) or not v:
            raise SpecError(f"sweep.{k}", "must be a non-empty list")
    solver = {**_SOLVER_DEFAULTS, **data.get("solver", {})}
    for k, v in solver.items():
        if k not in _SOLVER_DEFAULTS:
            raise SpecError(f"solver.{k}", "unknown solver parameter")
        if not isinstance(v, int) or v < 0 or (k == "Q" and v < 1) or (k == "I_o" and v < 1):
            raise SpecError(f"solver.{k}", f"invalid value {v!r}")
    trials = data.get("trials", 100)
    if not isinstance(trials, int) or trials < 0:
        raise SpecError("trials", "must be a non-negative integer")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise SpecError("seed", "must be a non-negative integer")
    spec = ExperimentSpec(exp, system, schemes, scenario, sweep, solver, trials, seed, data.get("out"), data)
    for point in spec.grid():
        spec.config(point)
        _gain_model(spec.scenario, 0)
    return spec


def load_spec(path) -> ExperimentSpec:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise SpecError("spec", f"cannot read {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise SpecError("spec", f"invalid TOML: {exc}") from None
    return spec_from_dict(data)


# --------------------------------------------------------------------------
# Monte-Carlo trials
# --------------------------------------------------------------------------

def _gain_model(scenario: dict, seed: int) -> GainModel:
    kind = scenario.get("gain_model", "free_space")
    offset = scenario.get("offset_db", DEFAULT_LINK_BUDGET_DB if kind == "free_space" else 0.0)
    try:
        return GainModel(kind, seed, float(offset))
    except ValueError as exc:
        raise SpecError("scenario.gain_model", str(exc)) from None


def build_scenario(scenario: dict, cfg: SystemConfig, rng: np.random.Generator) -> Scenario:
    ris = np.asarray(scenario.get("ris_positions", DEFAULT_RIS_POSITIONS), dtype=float)
    if ris.shape != (cfg.R, 3):
        raise SpecError("scenario.ris_positions", f"need {cfg.R} positions, got shape {ris.shape}")
    users = scenario.get("user_positions")
    if users is None:
        users = random_user_positions(cfg.K, rng, scenario.get("user_center", DEFAULT_USER_CENTER),
                                      scenario.get("user_radius", DEFAULT_USER_RADIUS))
    users = np.asarray(users, dtype=float).reshape(-1, 3)
    if users.shape[0] != cfg.K:
        raise SpecError("scenario.user_positions", f"need {cfg.K} users, got {users.shape[0]}")
    return Scenario(np.asarray(scenario.get("bs_position", DEFAULT_BS_POSITION), dtype=float), ris, users)


def trial_rngs(seed: int, trial: int):
    """(user placement, gain draw, CSI error) streams of one trial."""
    return np.random.SeedSequence([seed, trial]).spawn(3)


@dataclass
class _Task:
    kind: str
    cfg: SystemConfig
    arch: AnalogArchitecture
    scenario: dict
    solver: dict
    point: dict
    seed: int
    trial: int


def _check(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NumericalError("non-finite rate encountered")
    return x


def run_trial(task: _Task) -> dict:
    """One Monte-Carlo draw; returns per-subcarrier rates and traces."""
    cfg, sol = task.cfg, task.solver
    user_ss, gain_ss, csi_ss = trial_rngs(task.seed, task.trial)
    sc = build_scenario(task.scenario, cfg, np.random.default_rng(user_ss))
    gm = _gain_model(task.scenario, int(gain_ss.generate_state(1)[0]))

    if task.scenario.get("link", "ris") == "direct":
        if cfg.N_RF != cfg.K:
            raise SpecError("system", "the direct-link experiment needs one RF chain per user (N_RF = K)")
        h = direct_channels(sc, cfg, gm)
        F = build_analog_beamformer(task.arch, sc.bs_user_angles(), cfg).compose(subcarrier_frequencies(cfg))
        h_eff = np.einsum("mkn,mnc->mkc", h, F)
        wm = wmmse_solve(h_eff, F, cfg.P_max, cfg.sigma2, max_iter=max(sol["I_d"], 1))
        return {"rate_sum": _check(wm.rate_trace[-1])}

    ch = generate_channels(sc, cfg, gm)
    kw = dict(I_max=sol["I_max"], I_d=sol["I_d"], I_o=sol["I_o"], Q=sol["Q"])
    delta = float(task.point.get("delta", 0.0))
    if delta:
        est = apply_csi_error(ch, delta, seed=csi_ss)
        res = joint_optimize(sc, cfg, task.arch, channels=est, **kw)
        return {"rate_sum": _check(evaluate_rate(ch, res.F, res.reflection, res.d, cfg.sigma2))}
    res = joint_optimize(sc, cfg, task.arch, channels=ch, **kw)
    out = {"rate_sum": _check(res.rate)}
    if task.kind == "outer_convergence":
        out["outer"] = _pad(res.rate_trace, sol["I_max"] + 1)
    elif task.kind == "inner_convergence":
        out["wmmse"] = _pad_rounds(res.wmmse_traces, sol["I_max"], sol["I_d"] + 1)
        out["ris"] = _pad_rounds(res.ris_traces, sol["I_max"], sol["I_o"] + 1)
    return out


def _pad(trace, n: int) -> np.ndarray:
    """Fixed-length trace; entries after an early exit repeat the last value."""
    trace = list(trace)[:n]
    return np.array(trace + [trace[-1]] * (n - len(trace)), dtype=float)


def _pad_rounds(traces, rounds: int, n: int) -> np.ndarray:
    rows = [_pad(t, n) for t in traces][:rounds]
    while len(rows) < rounds:
        rows.append(np.full(n, rows[-1][-1]) if rows else np.zeros(n))
    return np.array(rows)


def _map(fn, tasks: list, threads: int) -> list:
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        # map preserves task order, so reductions never depend on the schedule
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * threads))))


# --------------------------------------------------------------------------
# Experiments
# --------------------------------------------------------------------------

def _frequencies(point: dict, cfg: SystemConfig):
    if "f_m_Hz" in point:
        return [float(point["f_m_Hz"])]
    return list(subcarrier_frequencies(cfg))


def _theta(point: dict) -> float:
    if "theta0_rad" in point:
        return float(point["theta0_rad"])
    if "theta0_deg" in point:
        return math.radians(float(point["theta0_deg"]))
    return math.pi / 4


def _sweep_columns(spec: ExperimentSpec, point: dict) -> dict:
    return {k: point[k] for k in spec.sweep}


def _antenna_rows(spec: ExperimentSpec, which: str) -> tuple:
    rows = []
    for point in spec.grid():
        cfg = spec.config(point)
        theta = _theta(point)
        for s in spec.schemes:
            plan = ideal_delays(s.arch, theta, cfg)
            plan_q = quantize_plan(plan, s.arch, cfg)
            tau = plan_q.per_antenna(s.arch, cfg.N)
            psi = ps_phases(s.arch, theta, cfg, quantized=True)
            n = np.arange(1, cfg.N + 1)
            for f in _frequencies(point, cfg):
                if which == "phase_error":
                    err = phase_error(s.arch, n, f, theta, cfg)
                    vals = [{"phase_error_rad": float(e)} for e in err]
                else:
                    ideal = 2 * np.pi * f * (n - 1) * cfg.T_d * math.sin(theta)
                    applied = 2 * np.pi * f * (tau - tau[0]) + psi
                    vals = [{"ideal_phase_rad": float(a), "applied_phase_rad": float(b)} for a, b in zip(ideal, applied)]
                for i, v in enumerate(vals):
                    rows.append({**s.columns(), **_sweep_columns(spec, point), "f_m_Hz": f,
                                 "theta0_rad": theta, "antenna": i + 1, **v})
    return rows


def _gain_rows(spec: ExperimentSpec) -> list:
    rows = []
    for point in spec.grid():
        cfg = spec.config(point)
        theta = _theta(point)
        for s in spec.schemes:
            for m, f in enumerate(_frequencies(point, cfg)):
                g = float(gain_brute_force(s.arch, f, theta, cfg, quantized=True))
                rows.append({**s.columns(), **_sweep_columns(spec, point), "subcarrier": m + 1,
                             "f_m_Hz": f, "theta0_rad": theta, "gain": g})
    return rows


def _rate_rows(spec: ExperimentSpec, threads: int) -> list:
    points = spec.grid()
    jobs = [(pi, si) for pi in range(len(points)) for si in range(len(spec.schemes))]
    tasks = [
        _Task(spec.experiment, spec.config(points[pi]), spec.schemes[si].arch, spec.scenario,
              spec.solver, points[pi], spec.seed, t)
        for pi, si in jobs for t in range(spec.trials)
    ]
    results = _map(run_trial, tasks, threads)
    rows = []
    M_of = {pi: spec.config(points[pi]).M for pi in range(len(points))}
    baseline = {}
    for j, (pi, si) in enumerate(jobs):
        chunk = results[j * spec.trials:(j + 1) * spec.trials]
        point, s = points[pi], spec.schemes[si]
        M = M_of[pi]
        base = {**s.columns(), **_sweep_columns(spec, point), "trials": spec.trials}
        if spec.experiment == "outer_convergence":
            trace = _mean([r["outer"] for r in chunk], spec.solver["I_max"] + 1)
            rows += [{**base, "outer_iteration": i, "rate_per_subcarrier": v / M} for i, v in enumerate(trace)]
            continue
        if spec.experiment == "inner_convergence":
            for loop, n in (("wmmse", spec.solver["I_d"] + 1), ("ris", spec.solver["I_o"] + 1)):
                traces = _mean([r[loop] for r in chunk], (spec.solver["I_max"], n))
                for o in range(traces.shape[0]):
                    rows += [{**base, "loop": loop, "outer_iteration": o + 1, "inner_iteration": i,
                              "rate_per_subcarrier": v / M} for i, v in enumerate(traces[o])]
            continue
        rate = _mean([r["rate_sum"] for r in chunk], ())
        row = {**base, "rate_sum": float(rate), "rate_per_subcarrier": float(rate) / M}
        if spec.experiment == "hardware_table":
            row = {**s.columns(), **_hardware_columns(spec, s, points[pi]), **row}
        if spec.experiment == "rate_vs_csi_error":
            key = (si, tuple((k, v) for k, v in point.items() if k != "delta"))
            if float(point.get("delta", 0.0)) == 0.0:
                baseline[key] = row["rate_per_subcarrier"]
            ref = baseline.get(key)
            row["loss_rel"] = (1.0 - row["rate_per_subcarrier"] / ref) if ref else float("nan")
        rows.append(row)
    return rows


def _mean(values: list, shape) -> np.ndarray:
    """Trial average accumulated in trial order."""
    if not values:
        return np.full(shape, np.nan)
    acc = np.zeros(shape)
    for v in values:
        acc = acc + np.asarray(v, dtype=float)
    return acc / len(values)


def _hardware_columns(spec: ExperimentSpec, s: SchemeSpec, point: dict) -> dict:
    cfg = spec.config(point)
    rep = complexity_report(cfg, s.arch, spec.solver["I_max"], spec.solver["I_d"], spec.solver["I_o"], spec.solver["Q"])
    cols = {k: rep[k] for k in ("large_range_ttds", "total_ttds", "total_bits")}
    for k in ("tau_u_max_Tc", "tau_second_max_Tc", "tau_first_max_Tc"):
        cols[k] = rep.get(k, "")
    return cols


def _hardware_rows(spec: ExperimentSpec, threads: int) -> list:
    if spec.trials:
        return _rate_rows(spec, threads)
    rows = []
    for point in spec.grid():
        for s in spec.schemes:
            rows.append({**s.columns(), **_hardware_columns(spec, s, point), **_sweep_columns(spec, point)})
    return rows


def compute_rows(spec: ExperimentSpec, threads: int = 1) -> list:
    exp = spec.experiment
    if exp in ("phase_compensation", "phase_error"):
        return _antenna_rows(spec, exp)
    if exp == "gain_vs_subcarrier":
        return _gain_rows(spec)
    if exp == "hardware_table":
        return _hardware_rows(spec, threads)
    return _rate_rows(spec, threads)


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return "[" + " ".join(_fmt(x) for x in v) + "]"
    return str(v)


def render_csv(spec: ExperimentSpec, rows: list) -> str:
    columns: List[str] = []
    for r in rows:
        for k in r:
            if k not in columns:
                columns.append(k)
    lines = [
        f"# experiment: {spec.experiment}",
        f"# seed: {spec.seed}",
        f"# trials: {spec.trials}",
        f"# swept: {', '.join(spec.sweep) if spec.sweep else '(none)'}",
        f"# solver: {json.dumps(spec.solver, sort_keys=True)}",
        f"# system: {json.dumps(spec.system, sort_keys=True)}",
        f"# scenario: {json.dumps(spec.scenario, sort_keys=True, default=list)}",
        ",".join(columns),
    ]
    for r in rows:
        lines.append(",".join(_fmt(r.get(c, "")) for c in columns))
    return "\n".join(lines) + "\n"


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def output_dir(spec: ExperimentSpec, override: Optional[str] = None) -> Path:
    return Path(override or spec.out or os.environ.get(OUT_DIR_ENV) or "results")


def run_experiment(spec: ExperimentSpec, out_dir=None, threads: int = 1) -> Dict[str, Path]:
    """Run ``spec`` and write ``<experiment>.csv`` and ``<experiment>.json``; returns their paths."""
    t0 = time.perf_counter()
    rows = compute_rows(spec, threads=threads)
    csv_text = render_csv(spec, rows)
    wall = time.perf_counter() - t0
    out = output_dir(spec, out_dir)
    csv_path = out / f"{spec.experiment}.csv"
    json_path = out / f"{spec.experiment}.json"
    manifest = {
        "experiment": spec.experiment,
        "seed": spec.seed,
        "trials": spec.trials,
        "threads": threads,
        "version": version_string(),
        "wall_time_s": wall,
        "rows": len(rows),
        "config": {
            "system": spec.system, "solver": spec.solver, "scenario": spec.scenario, "sweep": spec.sweep,
            "schemes": [{"label": s.label, **s.arch.to_dict()} for s in spec.schemes],
        },
        "csv": csv_path.name,
    }
    atomic_write(csv_path, csv_text)
    atomic_write(json_path, json.dumps(manifest, indent=2, sort_keys=True, default=list) + "\n")
    return {"csv": csv_path, "manifest": json_path}
