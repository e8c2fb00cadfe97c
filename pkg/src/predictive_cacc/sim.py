"""Multirate platoon simulator.

Plants are integrated exactly (zero-order hold) on a fine step; controllers
run every ``Ts``. Actuation and V2V delays are whole numbers of fine steps.
"""
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from ._kernels import run_platoon
from .errors import ConfigurationError
from .predictor import ControlGains, VehicleParams, build_context, feedback_row

CONTROLLERS = ("predictor", "nominal")


class VehicleState(NamedTuple):
    gap: float
    speed: float
    accel: float


def _lag_coefficients(tau, dt):
    one_m_e = -math.expm1(-dt / tau)
    v_u = dt - tau * one_m_e
    return one_m_e, v_u


def displacement(speed, accel, u_applied, tau, dt):
    """Distance covered over ``dt`` with the input held."""
    _, v_u = _lag_coefficients(tau, dt)
    return speed * dt + accel * tau * v_u + u_applied * (0.5 * dt * dt - tau * v_u)


def exact_zoh_step(state, v_prev, u_applied, tau, dt):
    """Advance one vehicle by ``dt`` with ``u_applied`` and ``v_prev`` held."""
    gap, v, a = state
    one_m_e, v_u = _lag_coefficients(tau, dt)
    a_new = a * (1.0 - one_m_e) + u_applied * one_m_e
    v_new = v + a * tau * one_m_e + u_applied * v_u
    gap_new = gap + v_prev * dt - displacement(v, a, u_applied, tau, dt)
    return VehicleState(gap_new, v_new, a_new)


class DelayLine:
    """Fixed-latency FIFO; ``push`` returns the sample pushed ``latency`` calls ago."""

    def __init__(self, latency, label="", fill=0.0):
        if latency < 0 or int(latency) != latency:
            raise ConfigurationError(f"delay line latency must be a whole step count, got {latency!r}")
        self.latency = int(latency)
        self.label = label
        self._buf = np.full(self.latency, float(fill))
        self._head = 0

    @classmethod
    def from_seconds(cls, delay, step, label="", fill=0.0):
        n = int(round(delay / step))
        if abs(n * step - delay) > 1e-9 * max(1.0, delay):
            raise ConfigurationError(f"{label or 'delay'}={delay!r} s is not a multiple of {step!r} s")
        return cls(n, label, fill)

    def push(self, value):
        if self.latency == 0:
            return value
        out = self._buf[self._head]
        self._buf[self._head] = value
        self._head = (self._head + 1) % self.latency
        return out


@dataclass
class NoiseConfig:
    enabled: bool = False
    gap: float = 0.01
    speed: float = 0.01
    accel: float = 0.02
    input: float = 0.02
    seed: int = 0


@dataclass
class ScenarioConfig:
    """Platoon definition. Index 0 is the leader; its gains/controller are unused."""

    vehicles: list
    gains: list
    init_speed: list
    init_gap: list
    init_accel: Optional[list] = None
    controllers: Optional[list] = None
    leader_profile: list = field(default_factory=list)
    sim_step: float = 0.001
    duration: float = 40.0
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    saturation: Optional[float] = None
    name: str = "custom"

    def __post_init__(self):
        n = len(self.vehicles)
        if self.init_accel is None:
            self.init_accel = [0.0] * n
        if self.controllers is None:
            self.controllers = ["predictor"] * n
        self.leader_profile = [(float(t), float(u)) for t, u in self.leader_profile]

    @property
    def N(self):
        return len(self.vehicles) - 1

    @property
    def Ts(self):
        return self.vehicles[0].Ts

    def validate(self):
        n = len(self.vehicles)
        if n < 2:
            raise ConfigurationError("need a leader and at least one follower")
        for name in ("gains", "init_speed", "init_gap", "init_accel", "controllers"):
            if len(getattr(self, name)) != n:
                raise ConfigurationError(f"{name} needs {n} entries (leader first)")
        if not self.sim_step > 0:
            raise ConfigurationError("sim_step must be positive")
        for i, p in enumerate(self.vehicles):
            if abs(p.Ts - self.Ts) > 1e-15:
                raise ConfigurationError(f"vehicle {i}: Ts={p.Ts!r} differs from leader Ts={self.Ts!r}")
        ratio = self.Ts / self.sim_step
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise ConfigurationError(f"sim_step={self.sim_step!r} does not divide Ts={self.Ts!r}")
        steps = self.duration / self.sim_step
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigurationError(f"duration={self.duration!r} is not a multiple of sim_step")
        for i in range(1, n):
            if not isinstance(self.gains[i], ControlGains):
                raise ConfigurationError(f"vehicle {i}: missing control gains")
            if self.controllers[i] not in CONTROLLERS:
                raise ConfigurationError(f"vehicle {i}: unknown controller {self.controllers[i]!r}")
        times = [t for t, _ in self.leader_profile]
        if any(t1 < t0 for t0, t1 in zip(times, times[1:])):
            raise ConfigurationError("leader profile times must be non-decreasing")
        if self.saturation is not None and not self.saturation > 0:
            raise ConfigurationError("saturation limit must be positive")


def leader_command(profile, t):
    """Piecewise-constant commanded leader acceleration at time ``t``."""
    u = 0.0
    for start, value in profile:
        if start <= t + 1e-12:
            u = value
        else:
            break
    return u


@dataclass
class Metrics:
    v_ref: float
    l2_speed_dev: np.ndarray
    peak_speed_dev: np.ndarray
    speed_overshoot: np.ndarray
    accel_overshoot: np.ndarray
    settling_time: np.ndarray
    min_gap: np.ndarray
    collision: bool


@dataclass
class SimOutput:
    time: np.ndarray
    gap: np.ndarray  # (steps, N), followers only
    speed: np.ndarray  # (steps, N + 1)
    accel: np.ndarray
    u_applied: np.ndarray
    u_commanded: np.ndarray
    metrics: Optional[Metrics] = None


def _noise_array(cfg, n_ctrl):
    n = len(cfg.vehicles)
    out = np.zeros((n_ctrl, n, 6))
    if cfg.noise.enabled:
        rng = np.random.default_rng(cfg.noise.seed)
        sigma = np.array([
            cfg.noise.gap, cfg.noise.speed, cfg.noise.speed,
            cfg.noise.accel, cfg.noise.accel, cfg.noise.input,
        ])
        out[:, 1:, :] = rng.standard_normal((n_ctrl, n - 1, 6)) * sigma
    return out


def simulate(cfg):
    cfg.validate()
    n = len(cfg.vehicles)
    dt = cfg.sim_step
    ratio = int(round(cfg.Ts / dt))
    n_steps = int(round(cfg.duration / dt))
    n_ctrl = n_steps // ratio + 1

    tau = np.array([p.tau for p in cfg.vehicles])
    act_lat = np.array([p.l * ratio for p in cfg.vehicles], dtype=np.int64)
    comm_lat = np.array([0] + [p.l_c * ratio for p in cfg.vehicles[1:]], dtype=np.int64)
    gap_ref = np.array([0.0] + [p.standstill_gap for p in cfg.vehicles[1:]])

    l_max = max(1, max(p.l for p in cfg.vehicles))
    exp_d = np.zeros((n, 5, 5))
    w_own = np.zeros((n, l_max, 5))
    w_prev = np.zeros((n, l_max, 5))
    n_own = np.zeros(n, dtype=np.int64)
    n_prev = np.zeros(n, dtype=np.int64)
    krow = np.zeros((n, 5))
    mode = np.zeros(n, dtype=np.int64)
    for i in range(1, n):
        p = cfg.vehicles[i]
        krow[i] = feedback_row(p, cfg.gains[i])
        if cfg.controllers[i] == "nominal":
            mode[i] = 1
            continue
        ctx = build_context(p, cfg.vehicles[i - 1])
        exp_d[i] = ctx.exp_gamma_D
        n_own[i] = ctx.l_own
        n_prev[i] = ctx.l_prev
        w_own[i, : ctx.l_own] = ctx.own_weights
        w_prev[i, : ctx.l_prev] = ctx.prev_weights

    leader_u = np.array([leader_command(cfg.leader_profile, k * cfg.Ts) for k in range(n_ctrl)])
    s0 = np.array([0.0] + list(cfg.init_gap[1:]), dtype=float)
    sat = math.inf if cfg.saturation is None else float(cfg.saturation)

    s, v, a, u_cmd, u_app, _, _ = run_platoon(
        n_steps, ratio, dt, tau, act_lat, comm_lat, gap_ref, s0,
        np.asarray(cfg.init_speed, dtype=float), np.asarray(cfg.init_accel, dtype=float),
        leader_u, exp_d, w_own, n_own, w_prev, n_prev, krow, mode,
        _noise_array(cfg, n_ctrl), sat,
    )
    out = SimOutput(
        time=np.arange(n_steps + 1) * dt,
        gap=s[:, 1:],
        speed=v,
        accel=a,
        u_applied=u_app,
        u_commanded=u_cmd,
    )
    out.metrics = compute_metrics(out, cfg)
    return out


def compute_metrics(out, cfg=None, band=0.05):
    """Response summary per vehicle (leader included at index 0)."""
    dt = out.time[1] - out.time[0]
    v_ref = float(out.speed[-1, 0])
    dev = out.speed - v_ref
    l2 = np.sqrt(dt * np.sum(dev**2, axis=0))
    peak = np.max(np.abs(dev), axis=0)
    speed_over = np.maximum(0.0, out.speed.max(axis=0) - out.speed[:, 0].max())
    accel_over = np.maximum(0.0, np.abs(out.accel).max(axis=0) - np.abs(out.accel[:, 0]).max())
    settle = np.zeros(out.speed.shape[1])
    for i in range(out.speed.shape[1]):
        outside = np.nonzero(np.abs(dev[:, i]) > band)[0]
        if outside.size:
            last = outside[-1]
            settle[i] = out.time[min(last + 1, len(out.time) - 1)]
    min_gap = out.gap.min(axis=0)
    return Metrics(
        v_ref=v_ref,
        l2_speed_dev=l2,
        peak_speed_dev=peak,
        speed_overshoot=speed_over,
        accel_overshoot=accel_over,
        settling_time=settle,
        min_gap=min_gap,
        collision=bool(np.any(min_gap <= 0.0)),
    )
