"""Scenario JSON parsing/echo, CSV emission and run manifests."""
import hashlib
import json
import os
import re
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, presets
from .errors import ConfigurationError
from .predictor import ControlGains, VehicleParams
from .sim import CONTROLLERS, NoiseConfig, ScenarioConfig

TOP_KEYS = {"preset", "name", "Ts_s", "sim_step_s", "duration_s", "allow_delay_rounding",
            "saturation_mps2", "noise", "leader", "followers"}
NOISE_KEYS = {"enabled", "gap_m", "speed_mps", "accel_mps2", "input_mps2", "seed"}
LEADER_KEYS = {"tau_s", "delay_s", "speed0_mps", "accel0_mps2", "profile"}
LEADER_REQUIRED = {"tau_s", "delay_s", "speed0_mps"}
FOLLOWER_KEYS = {"tau_s", "delay_s", "comm_delay_s", "headway_s", "standstill_gap_m", "alpha", "b",
                 "c", "speed0_mps", "gap0_m", "accel0_mps2", "controller"}
FOLLOWER_REQUIRED = {"tau_s", "delay_s", "headway_s", "alpha", "b", "speed0_mps", "gap0_m"}

CSV_FORMAT = "%.17g"

# "<subject>: key=value, key=value"
VERDICT_RE = re.compile(
    r"^(?P<subject>[a-z][a-z-]*): "
    r"(?P<fields>[a-z_][a-z0-9_]*=[^\s,]+(?:, [a-z_][a-z0-9_]*=[^\s,]+)*)$"
)


def _check_keys(obj, allowed, required, where):
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{where}: expected an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigurationError(f"{where}: unknown keys {', '.join(unknown)}")
    missing = sorted(required - set(obj))
    if missing:
        raise ConfigurationError(f"{where}: missing required keys {', '.join(missing)}")


def config_to_dict(cfg):
    """Resolved, unit-explicit echo of a scenario (every default filled in)."""
    lead = cfg.vehicles[0]
    followers = []
    for i in range(1, len(cfg.vehicles)):
        p, g = cfg.vehicles[i], cfg.gains[i]
        followers.append({
            "tau_s": p.tau,
            "delay_s": p.delay,
            "comm_delay_s": p.comm_delay,
            "headway_s": p.headway,
            "standstill_gap_m": p.standstill_gap,
            "alpha": g.alpha,
            "b": g.b,
            "c": g.c,
            "speed0_mps": float(cfg.init_speed[i]),
            "gap0_m": float(cfg.init_gap[i]),
            "accel0_mps2": float(cfg.init_accel[i]),
            "controller": cfg.controllers[i],
        })
    return {
        "name": cfg.name,
        "Ts_s": cfg.Ts,
        "sim_step_s": cfg.sim_step,
        "duration_s": cfg.duration,
        "allow_delay_rounding": any(p.round_delays for p in cfg.vehicles),
        "saturation_mps2": cfg.saturation,
        "noise": {
            "enabled": cfg.noise.enabled,
            "gap_m": cfg.noise.gap,
            "speed_mps": cfg.noise.speed,
            "accel_mps2": cfg.noise.accel,
            "input_mps2": cfg.noise.input,
            "seed": cfg.noise.seed,
        },
        "leader": {
            "tau_s": lead.tau,
            "delay_s": lead.delay,
            "speed0_mps": float(cfg.init_speed[0]),
            "accel0_mps2": float(cfg.init_accel[0]),
            "profile": [[t, u] for t, u in cfg.leader_profile],
        },
        "followers": followers,
    }


def config_from_dict(data):
    _check_keys(data, TOP_KEYS, set(), "config")
    if "preset" in data:
        try:
            base, _ = presets.get(data["preset"])
        except KeyError:
            raise ConfigurationError(f"config: unknown preset {data['preset']!r}") from None
        merged = config_to_dict(base)
        merged.update({k: v for k, v in data.items() if k != "preset"})
        data = merged
    for key in ("leader", "followers"):
        if key not in data:
            raise ConfigurationError(f"config: missing required keys {key}")

    Ts = float(data.get("Ts_s", presets.TS))
    rounding = bool(data.get("allow_delay_rounding", False))

    noise_in = data.get("noise", {})
    _check_keys(noise_in, NOISE_KEYS, set(), "noise")
    noise = NoiseConfig(
        enabled=bool(noise_in.get("enabled", False)),
        gap=float(noise_in.get("gap_m", NoiseConfig.gap)),
        speed=float(noise_in.get("speed_mps", NoiseConfig.speed)),
        accel=float(noise_in.get("accel_mps2", NoiseConfig.accel)),
        input=float(noise_in.get("input_mps2", NoiseConfig.input)),
        seed=int(noise_in.get("seed", 0)),
    )

    lead = data["leader"]
    _check_keys(lead, LEADER_KEYS, LEADER_REQUIRED, "leader")
    try:
        vehicles = [VehicleParams(tau=float(lead["tau_s"]), delay=float(lead["delay_s"]), Ts=Ts,
                                  round_delays=rounding)]
    except ConfigurationError as exc:
        raise ConfigurationError(f"leader: {exc}") from None
    gains = [None]
    speeds = [float(lead["speed0_mps"])]
    gaps = [0.0]
    accels = [float(lead.get("accel0_mps2", 0.0))]
    controllers = ["predictor"]

    if not isinstance(data["followers"], list) or not data["followers"]:
        raise ConfigurationError("followers: need a non-empty list")
    for i, fol in enumerate(data["followers"], start=1):
        where = f"follower {i}"
        _check_keys(fol, FOLLOWER_KEYS, FOLLOWER_REQUIRED, where)
        try:
            vehicles.append(VehicleParams(
                tau=float(fol["tau_s"]),
                delay=float(fol["delay_s"]),
                comm_delay=float(fol.get("comm_delay_s", 0.0)),
                headway=float(fol["headway_s"]),
                standstill_gap=float(fol.get("standstill_gap_m", presets.STANDSTILL_GAP)),
                Ts=Ts,
                round_delays=rounding,
            ))
            gains.append(ControlGains(float(fol["alpha"]), float(fol["b"]), float(fol.get("c", 0.0))))
        except ConfigurationError as exc:
            raise ConfigurationError(f"{where}: {exc}") from None
        controller = fol.get("controller", "predictor")
        if controller not in CONTROLLERS:
            raise ConfigurationError(f"{where}: controller must be one of {', '.join(CONTROLLERS)}")
        controllers.append(controller)
        speeds.append(float(fol["speed0_mps"]))
        gaps.append(float(fol["gap0_m"]))
        accels.append(float(fol.get("accel0_mps2", 0.0)))

    sat = data.get("saturation_mps2")
    cfg = ScenarioConfig(
        vehicles=vehicles,
        gains=gains,
        init_speed=speeds,
        init_gap=gaps,
        init_accel=accels,
        controllers=controllers,
        leader_profile=[tuple(seg) for seg in lead.get("profile", [])],
        sim_step=float(data.get("sim_step_s", presets.SIM_STEP)),
        duration=float(data.get("duration_s", 40.0)),
        noise=noise,
        saturation=None if sat is None else float(sat),
        name=str(data.get("name", "custom")),
    )
    cfg.validate()
    return cfg


def parse_config(path):
    """Read a scenario JSON file (or ``{"preset": name, ...overrides}``)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return config_from_dict(data)


def with_ts(cfg, Ts):
    """Copy of ``cfg`` with every vehicle resampled at ``Ts``."""
    vehicles = [replace(p, Ts=Ts) for p in cfg.vehicles]
    return replace(cfg, vehicles=vehicles)


def file_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_csv(path, columns):
    """Write ``{name: 1-D array}`` as CSV with a header row and 17 significant digits."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[n], dtype=float) for n in names])
    with open(path, "w", newline="\n") as fh:
        np.savetxt(fh, data, fmt=CSV_FORMAT, delimiter=",", header=",".join(names), comments="")
    return Path(path)


def read_csv(path):
    with open(path) as fh:
        names = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {n: data[:, i] for i, n in enumerate(names)}


def write_sim_outputs(out, cfg, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n = len(cfg.vehicles)
    t = {"time_s": out.time}
    files = [
        write_csv(directory / "speeds.csv", {**t, **{f"v{i}": out.speed[:, i] for i in range(n)}}),
        write_csv(directory / "gaps.csv", {**t, **{f"s{i}": out.gap[:, i - 1] for i in range(1, n)}}),
        write_csv(directory / "accels.csv", {**t, **{f"a{i}": out.accel[:, i] for i in range(n)}}),
        write_csv(directory / "inputs.csv", {
            **t,
            **{f"u_cmd{i}": out.u_commanded[:, i] for i in range(n)},
            **{f"u_app{i}": out.u_applied[:, i] for i in range(n)},
        }),
    ]
    m = out.metrics
    min_gap = np.concatenate([[np.nan], m.min_gap])
    files.append(write_csv(directory / "metrics.csv", {
        "vehicle": np.arange(n),
        "l2_speed_dev": m.l2_speed_dev,
        "peak_speed_dev": m.peak_speed_dev,
        "speed_overshoot": m.speed_overshoot,
        "accel_overshoot": m.accel_overshoot,
        "settling_time_s": m.settling_time,
        "min_gap_m": min_gap,
    }))
    return files


def write_manifest(directory, command, cfg, outputs, seed=None, input_file=None):
    """Deterministic JSON manifest (no timestamps) next to the outputs."""
    directory = Path(directory)
    manifest = {
        "tool": "predictive-cacc",
        "version": __version__,
        "command": command,
        "seed": seed,
        "input_file": None if input_file is None else str(input_file),
        "input_sha256": None if input_file is None else file_sha256(input_file),
        "config": None if cfg is None else config_to_dict(cfg),
        "outputs": [
            {"file": os.path.basename(p), "sha256": file_sha256(p)} for p in outputs
        ],
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def format_verdict(subject, **fields):
    parts = []
    for key, value in fields.items():
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif value is None:
            text = "none"
        elif isinstance(value, float):
            text = f"{value:.10g}"
        else:
            text = str(value)
        parts.append(f"{key}={text}")
    line = f"{subject}: " + ", ".join(parts)
    assert VERDICT_RE.match(line), line
    return line


def parse_verdict(line):
    m = VERDICT_RE.match(line.strip())
    if not m:
        raise ValueError(f"not a verdict line: {line!r}")
    fields = dict(item.split("=", 1) for item in m.group("fields").split(", "))
    return m.group("subject"), fields
