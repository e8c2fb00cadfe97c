"""Command-line front end.

Exit codes: 0 success, 1 configuration error, 2 runtime/numerical error,
3 negative stability verdict.
"""
import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io, presets
from .errors import ConfigurationError
from .sim import simulate
from .stability import (
    is_string_stable,
    max_eig_magnitude,
    string_stability_margin,
    sweep_alpha_b,
    sweep_delay_diff,
    sweep_Ts,
    tustin_tf,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_NEGATIVE = 0, 1, 2, 3

log = logging.getLogger("predictive_cacc")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message)


def _scenario_args(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", help="fig4, experiment, experiment4, ablation, table1 or vehicle1..vehicle4")
    src.add_argument("--config", type=Path, help="scenario JSON file")
    p.add_argument("--out", type=Path, default=None,
                   help="output directory (default: $PLATOON_OUT_DIR or ./out)")
    p.add_argument("--seed", type=int, default=None, help="noise RNG seed (u64)")
    p.add_argument("--noise", action="store_true", help="enable measurement noise")
    p.add_argument("--ts", type=float, default=None, help="override the sampling period [s]")
    p.add_argument("--vehicle", type=int, default=None, help="follower index to analyse")


def build_parser():
    parser = _Parser(prog="predictive-cacc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="time-domain platoon run")
    _scenario_args(p)
    p.add_argument("--duration", type=float, default=None, help="override duration [s]")
    p.add_argument("--nominal", type=int, action="append", default=[],
                   help="run this follower with the uncompensated law (repeatable)")

    p = sub.add_parser("vehicle-stability", help="eigenvalues of the sampled closed loop")
    _scenario_args(p)

    p = sub.add_parser("string-stability", help="sup |G(e^{jwTs})| per follower")
    _scenario_args(p)

    p = sub.add_parser("sweep-alpha-b", help="margin over an (alpha, b) grid")
    _scenario_args(p)
    p.add_argument("--alpha-min", type=float, default=0.5)
    p.add_argument("--alpha-max", type=float, default=20.0)
    p.add_argument("--alpha-steps", type=int, default=100)
    p.add_argument("--b-min", type=float, default=0.5)
    p.add_argument("--b-max", type=float, default=30.0)
    p.add_argument("--b-steps", type=int, default=100)

    p = sub.add_parser("sweep-delay", help="margin vs D_i - D_{i-1}")
    _scenario_args(p)
    p.add_argument("--delta-min", type=float, default=-0.15)
    p.add_argument("--delta-max", type=float, default=0.6)
    p.add_argument("--delta-step", type=float, default=0.01)

    p = sub.add_parser("sweep-ts", help="max eigenvalue magnitude vs Ts")
    _scenario_args(p)
    p.add_argument("--ts-min", type=float, default=0.01)
    p.add_argument("--ts-max", type=float, default=2.0)
    p.add_argument("--ts-steps", type=int, default=200)
    return parser


def _load(args, default_preset, resample=True):
    seed = 0 if args.seed is None else args.seed
    if args.config is not None:
        cfg = io.parse_config(args.config)
        vehicle = None
        if args.noise:
            cfg.noise.enabled = True
        if args.seed is not None:
            cfg.noise.seed = seed
    else:
        name = args.preset or default_preset
        try:
            cfg, vehicle = presets.get(name, noise=args.noise, seed=seed)
        except KeyError:
            raise ConfigurationError(f"unknown preset {name!r}") from None
    if resample and args.ts is not None:
        cfg = io.with_ts(cfg, args.ts)
    if args.vehicle is not None:
        vehicle = args.vehicle
    if vehicle is not None and not 1 <= vehicle <= cfg.N:
        raise ConfigurationError(f"--vehicle must be between 1 and {cfg.N}")
    return cfg, vehicle


def _out_dir(args):
    out = args.out or Path(os.environ.get("PLATOON_OUT_DIR", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(args, cfg, outputs, verdict, code=EXIT_OK):
    out = _out_dir(args)
    io.write_manifest(out, args.command, cfg, outputs,
                      seed=None if cfg is None else cfg.noise.seed,
                      input_file=args.config)
    print(verdict)
    return code


def cmd_simulate(args):
    cfg, _ = _load(args, "fig4")
    if args.duration is not None:
        cfg.duration = args.duration
    for i in args.nominal:
        if not 1 <= i <= cfg.N:
            raise ConfigurationError(f"--nominal {i}: no such follower")
        cfg.controllers[i] = "nominal"
    out = simulate(cfg)
    files = io.write_sim_outputs(out, cfg, _out_dir(args))
    m = out.metrics
    verdict = io.format_verdict(
        "simulated", vehicles=len(cfg.vehicles), collision=m.collision,
        min_gap=float(np.min(m.min_gap)), max_l2=float(np.max(m.l2_speed_dev[1:])),
    )
    return _finish(args, cfg, files, verdict)


def cmd_vehicle_stability(args):
    # vehicle stability ignores delays, so --ts need not keep them on the grid
    cfg, vehicle = _load(args, "table1", resample=False)
    Ts = cfg.Ts if args.ts is None else args.ts
    if not Ts > 0:
        raise ConfigurationError("--ts must be positive")
    indices = [vehicle] if vehicle else range(1, cfg.N + 1)
    rows = [(i, max_eig_magnitude(cfg.vehicles[i], cfg.gains[i], Ts)) for i in indices]
    path = io.write_csv(_out_dir(args) / "vehicle_stability.csv", {
        "vehicle": [i for i, _ in rows], "max_eig": [m for _, m in rows],
    })
    worst, peak = max(rows, key=lambda r: r[1])
    stable = peak < 1.0
    verdict = io.format_verdict("vehicle-stable" if stable else "vehicle-unstable",
                                max_eig=peak, vehicle=worst, ts=Ts)
    return _finish(args, cfg, [path], verdict, EXIT_OK if stable else EXIT_NEGATIVE)


def cmd_string_stability(args):
    cfg, vehicle = _load(args, "table1")
    indices = [vehicle] if vehicle else range(1, cfg.N + 1)
    rows = []
    for i in indices:
        tf = tustin_tf(cfg.vehicles[i], cfg.vehicles[i - 1], cfg.gains[i])
        rows.append((i, string_stability_margin(tf), tf.dc_gain()))
    path = io.write_csv(_out_dir(args) / "string_margins.csv", {
        "vehicle": [r[0] for r in rows], "margin": [r[1] for r in rows], "dc_gain": [r[2] for r in rows],
    })
    worst, margin, _ = max(rows, key=lambda r: r[1])
    stable = is_string_stable(margin)
    verdict = io.format_verdict("string-stable" if stable else "string-unstable",
                                margin=margin, vehicle=worst, ts=cfg.Ts)
    return _finish(args, cfg, [path], verdict, EXIT_OK if stable else EXIT_NEGATIVE)


def cmd_sweep_alpha_b(args):
    cfg, vehicle = _load(args, "vehicle1")
    i = vehicle or 1
    alphas = np.linspace(args.alpha_min, args.alpha_max, args.alpha_steps)
    bs = np.linspace(args.b_min, args.b_max, args.b_steps)
    field = sweep_alpha_b(cfg.vehicles[i], cfg.vehicles[i - 1], cfg.gains[i], alphas, bs)
    A, B = np.meshgrid(alphas, bs, indexing="ij")
    path = io.write_csv(_out_dir(args) / "alpha_b_margin.csv", {
        "alpha": A.ravel(), "b": B.ravel(), "margin": field.margin.ravel(),
        "string_stable": field.stable.ravel().astype(float),
    })
    verdict = io.format_verdict("sweep-alpha-b", vehicle=i, cells=int(field.margin.size),
                                stable_fraction=float(field.stable.mean()))
    return _finish(args, cfg, [path], verdict)


def cmd_sweep_delay(args):
    cfg, vehicle = _load(args, "vehicle1")
    i = vehicle or 1
    Ts = cfg.Ts
    lo = int(round(args.delta_min / Ts))
    hi = int(round(args.delta_max / Ts))
    stride = max(1, int(round(args.delta_step / Ts)))
    deltas = np.arange(lo, hi + 1, stride) * Ts
    margins = sweep_delay_diff(cfg.vehicles[i], cfg.vehicles[i - 1], cfg.gains[i], deltas)
    path = io.write_csv(_out_dir(args) / "delay_margin.csv", {
        "delta_s": deltas, "margin": margins, "string_stable": (margins <= 1 + 1e-6).astype(float),
    })
    verdict = io.format_verdict("sweep-delay", vehicle=i, points=len(deltas),
                                max_margin=float(margins.max()))
    return _finish(args, cfg, [path], verdict)


def cmd_sweep_ts(args):
    cfg, vehicle = _load(args, "vehicle1")
    i = vehicle or 1
    ts_values = np.linspace(args.ts_min, args.ts_max, args.ts_steps)
    res = sweep_Ts(cfg.vehicles[i], cfg.gains[i], ts_values)
    path = io.write_csv(_out_dir(args) / "ts_max_eig.csv", {"Ts_s": res.Ts, "max_eig": res.max_eig})
    verdict = io.format_verdict("sweep-ts", vehicle=i, points=len(ts_values), threshold=res.threshold)
    return _finish(args, cfg, [path], verdict)


COMMANDS = {
    "simulate": cmd_simulate,
    "vehicle-stability": cmd_vehicle_stability,
    "string-stability": cmd_string_stability,
    "sweep-alpha-b": cmd_sweep_alpha_b,
    "sweep-delay": cmd_sweep_delay,
    "sweep-ts": cmd_sweep_ts,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
