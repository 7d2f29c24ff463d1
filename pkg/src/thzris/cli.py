"""Command-line entry point.

Exit codes: 0 success, 1 bad configuration or usage, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import math
import sys
from typing import List, Optional

import numpy as np

from .analog import AnalogArchitecture, bit_ratio, gain_brute_force, required_bits
from .channel import SystemConfig
from .experiments import (NumericalError, SpecError, compute_rows, default_schemes, load_spec, render_csv,
                          run_experiment, spec_from_dict, tomllib)
from .orchestrator import hardware_report

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _step(s: str):
    if s == "continuous":
        return None
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive or 'continuous'")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="thzris", description="Wideband THz RIS downlink with TTD hybrid beamforming.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    run = sub.add_parser("run", help="run an experiment spec (TOML)")
    run.add_argument("spec")
    run.add_argument("--seed", type=int, help="master seed (overrides the spec file)")
    run.add_argument("--out", help="output directory (default: spec, then $THZRIS_OUT_DIR, then ./results)")
    run.add_argument("--trials", type=int, help="Monte-Carlo trials per grid point")
    run.add_argument("--threads", type=_positive_int, default=1, help="worker processes")

    gain = sub.add_parser("gain", help="normalized array gain of one scheme")
    gain.add_argument("--scheme", choices=["ps", "single", "double"], required=True)
    gain.add_argument("--theta", type=float, default=math.pi / 4, help="steering angle, rad")
    gain.add_argument("--fm", type=float, nargs="+", default=None, help="frequencies, Hz (default: subcarriers)")
    gain.add_argument("--N", type=int, default=128)
    gain.add_argument("--U", type=int, default=32)
    gain.add_argument("--K-H", dest="K_H", type=int, default=8)
    gain.add_argument("--K-L", dest="K_L", type=int, default=4)
    gain.add_argument("--P-s", dest="P_s", type=int, default=8)
    gain.add_argument("--P-H", dest="P_H", type=int, default=8)
    gain.add_argument("--P-L", dest="P_L", type=int, default=4)
    gain.add_argument("--D", type=_step, default=None, help="delay step in T_c, or 'continuous' (default)")
    gain.add_argument("--ps-bits", type=int, default=0)

    bits = sub.add_parser("bits", help="required TTD bits and bit ratio")
    bits.add_argument("--config", help="TOML file with a [bits] table (N, theta, U, K_H, K_L, f_c, D_over_Tc)")
    bits.add_argument("--N", type=int)
    bits.add_argument("--theta", type=float)
    bits.add_argument("--U", type=int)
    bits.add_argument("--K-H", dest="K_H", type=int)
    bits.add_argument("--K-L", dest="K_L", type=int)
    bits.add_argument("--fc", dest="f_c", type=float)
    bits.add_argument("--D", dest="D_over_Tc", type=float)

    t2 = sub.add_parser("table2", help="hardware cost of the default single/double-layer schemes")
    t2.add_argument("--seed", type=int, default=0)
    t2.add_argument("--out", help="also write the table (and rates) as CSV into this directory")
    t2.add_argument("--trials", type=int, default=0, help="Monte-Carlo trials for the rate column (0 = skip)")
    t2.add_argument("--threads", type=_positive_int, default=1)
    return p


def _cmd_run(args) -> int:
    spec = load_spec(args.spec)
    if args.seed is not None:
        if args.seed < 0:
            raise SpecError("--seed", "must be non-negative")
        spec.seed = args.seed
    if args.trials is not None:
        if args.trials < 0:
            raise SpecError("--trials", "must be non-negative")
        spec.trials = args.trials
    paths = run_experiment(spec, out_dir=args.out, threads=args.threads)
    print(paths["csv"])
    print(paths["manifest"])
    return EXIT_OK


def _cmd_gain(args) -> int:
    try:
        cfg = SystemConfig(N=args.N)
        if args.scheme == "ps":
            arch = AnalogArchitecture.ps_only(args.ps_bits)
        elif args.scheme == "single":
            arch = AnalogArchitecture.single_layer(args.U, args.P_s, args.D, args.ps_bits)
        else:
            arch = AnalogArchitecture.double_layer(args.K_H, args.K_L, args.P_H, args.P_L, args.D, args.ps_bits)
        arch.subarray_size(cfg.N)
    except ValueError as exc:
        raise SpecError("gain", str(exc)) from None
    from .channel import subcarrier_frequencies
    freqs = [float(f) for f in (args.fm if args.fm else subcarrier_frequencies(cfg))]
    for f in freqs:
        if not f > 0:
            raise SpecError("--fm", "frequencies must be positive")
        g = float(gain_brute_force(arch, f, args.theta, cfg, quantized=True))
        if not math.isfinite(g):
            raise NumericalError("non-finite gain")
        print(f"{f!r} {g!r}" if len(freqs) > 1 else repr(round(g, 12)))
    return EXIT_OK


_BITS_DEFAULTS = {"N": 128, "theta": math.pi / 4, "U": 32, "K_H": 8, "K_L": 4, "f_c": 300e9, "D_over_Tc": 1.0}


def _cmd_bits(args) -> int:
    values = dict(_BITS_DEFAULTS)
    if args.config:
        try:
            with open(args.config, "rb") as fh:
                data = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise SpecError("--config", str(exc)) from None
        table = data.get("bits", data)
        for k, v in table.items():
            if k not in values:
                raise SpecError(f"bits.{k}", "unknown key")
            values[k] = v
    for k in values:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    try:
        cfg = SystemConfig(N=int(values["N"]), f_c=float(values["f_c"]), B=0.0)
        single = AnalogArchitecture.single_layer(int(values["U"]))
        double = AnalogArchitecture.double_layer(int(values["K_H"]), int(values["K_L"]))
        D = float(values["D_over_Tc"]) * cfg.T_c
        rs = required_bits(single, values["theta"], cfg, D=D)
        rd = required_bits(double, values["theta"], cfg, D=D)
    except ValueError as exc:
        raise SpecError("bits", str(exc)) from None
    if rd.no_delay_needed:
        print("no delay needed (broadside)")
        return EXIT_OK
    single_bits = single.U * rs.P_s
    double_bits = double.K_H * rd.P_H + double.K_H * double.K_L * rd.P_L
    eta = bit_ratio(double.K_H, rd.P_H, double.K_L, rd.P_L, single.U, rs.P_s)
    print(f"P bound: {rd.subarray_bound}")
    print(f"P_L={rd.P_L}")
    print(f"P_H={rd.P_H}")
    print(f"P_s={rs.P_s}")
    print(f"single-layer bits: {single_bits}")
    print(f"double-layer bits: {double_bits}")
    print(f"eta={eta * 100:g}%")
    return EXIT_OK


def _cmd_table2(args) -> int:
    spec = spec_from_dict({"experiment": "hardware_table", "trials": args.trials, "seed": args.seed})
    cfg = spec.config()
    header = ["scheme", "delay ranges [T_c]", "large TTDs", "total TTDs", "total bits"]
    rows = []
    for s in default_schemes("hardware_table"):
        rep = hardware_report(s.arch, cfg)
        ranges = " + ".join(f"[0, {v:g}]" for k, v in rep.items() if k.endswith("_max_Tc"))
        rows.append([s.arch.label(), ranges, str(rep["large_range_ttds"]), str(rep["total_ttds"]),
                     str(rep["total_bits"])])
    if args.trials:
        data = compute_rows(spec, threads=args.threads)
        header.append("rate [bit/s/Hz]")
        for r, d in zip(rows, data):
            r.append(f"{d['rate_per_subcarrier']:.3f}")
    widths = [max(len(x) for x in col) for col in zip(header, *rows)]
    for line in [header] + rows:
        print("  ".join(x.ljust(w) for x, w in zip(line, widths)).rstrip())
    if args.out:
        paths = run_experiment(spec, out_dir=args.out, threads=args.threads)
        print(paths["csv"])
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_CONFIG
    handlers = {"run": _cmd_run, "gain": _cmd_gain, "bits": _cmd_bits, "table2": _cmd_table2}
    try:
        with np.errstate(invalid="raise", divide="raise", over="raise"):
            return handlers[args.command](args)
    except SpecError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
