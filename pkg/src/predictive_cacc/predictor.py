"""Sampled-data predictor-based CACC law.

Each follower predicts its own state ``D_i`` seconds ahead from the current
(sampled) measurements, the inputs it has already issued but which have not
yet reached the powertrain, and the predecessor inputs received over V2V.
The nominal headway law is then evaluated on the prediction.
"""
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError
from .matrix_core import build_gamma, expm_gamma_closed, int_expm_neg_gamma

log = logging.getLogger(__name__)

_GRID_TOL = 1e-9


def _samples(value, Ts, what, round_delays):
    ratio = value / Ts
    n = int(round(ratio))
    if abs(n * Ts - value) > _GRID_TOL * max(1.0, abs(value)):
        if not round_delays:
            raise ConfigurationError(
                f"{what}={value!r} s is not an integer multiple of Ts={Ts!r} s"
            )
        log.warning("%s=%r s rounded to %d samples (%r s)", what, value, n, n * Ts)
    return n


@dataclass(frozen=True)
class VehicleParams:
    """Physical and timing constants of one vehicle (SI units)."""

    tau: float
    delay: float
    comm_delay: float = 0.0
    headway: float = 1.0
    standstill_gap: float = 10.0
    Ts: float = 0.01
    round_delays: bool = False

    def __post_init__(self):
        for name in ("tau", "headway", "standstill_gap", "Ts"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigurationError(f"{name} must be positive, got {value!r}")
        for name in ("delay", "comm_delay"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ConfigurationError(f"{name} must be non-negative, got {value!r}")
        l = _samples(self.delay, self.Ts, "delay", self.round_delays)
        l_c = _samples(self.comm_delay, self.Ts, "comm_delay", self.round_delays)
        # snap to the grid so that l * Ts == delay from here on
        object.__setattr__(self, "delay", l * self.Ts)
        object.__setattr__(self, "comm_delay", l_c * self.Ts)

    @property
    def l(self):
        return int(round(self.delay / self.Ts))

    @property
    def l_c(self):
        return int(round(self.comm_delay / self.Ts))


@dataclass(frozen=True)
class ControlGains:
    alpha: float
    b: float
    c: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigurationError(f"alpha must be > 0, got {self.alpha!r}")
        if not self.b > 0:
            raise ConfigurationError(f"b must be > 0, got {self.b!r}")
        if not self.c >= 0:
            raise ConfigurationError(f"c must be >= 0, got {self.c!r}")


class MeasurementVector(NamedTuple):
    """Sampled controller input; predecessor channels are already comm-delayed."""

    gap_err: float
    v_ego: float
    v_prev: float
    a_ego: float
    a_prev: float


class PredictorOutput(NamedTuple):
    q1: float
    q2: float
    q3: float
    q4: float
    q5: float


def feedback_row(p, g):
    """Row vector mapping a 5-state (measured or predicted) to the command."""
    tau = p.tau
    return np.array([
        tau * g.alpha / p.headway,
        -tau * (g.alpha + g.b),
        tau * g.b,
        -tau * g.c,
        tau * g.c,
    ])


def nominal_control(x, p, g):
    """Delay-free headway law evaluated directly on the measurements."""
    x = MeasurementVector(*x)
    tau = p.tau
    return (
        tau * g.alpha * (x.gap_err / p.headway - x.v_ego)
        + tau * g.b * (x.v_prev - x.v_ego)
        + tau * g.c * (x.a_prev - x.a_ego)
    )


@dataclass
class PredictorContext:
    exp_gamma_D: np.ndarray
    exp_gamma_diff: np.ndarray
    Q_own: np.ndarray  # (l_i, 5, 5), entry j-1 holds Q_j
    Q_prev: np.ndarray  # (l_{i-1}, 5, 5)
    B_own: np.ndarray
    B_prev: np.ndarray
    own_history: deque = field(default_factory=deque)
    prev_history: deque = field(default_factory=deque)

    def __post_init__(self):
        # per-sample weight vectors of the two convolution sums
        self.own_weights = self.Q_own @ self.B_own if len(self.Q_own) else np.zeros((0, 5))
        self.prev_weights = (
            self.exp_gamma_diff @ (self.Q_prev @ self.B_prev).T
        ).T if len(self.Q_prev) else np.zeros((0, 5))

    @property
    def l_own(self):
        return len(self.Q_own)

    @property
    def l_prev(self):
        return len(self.Q_prev)

    def reset(self):
        self.own_history = deque([0.0] * self.l_own, maxlen=self.l_own)
        self.prev_history = deque([0.0] * self.l_prev, maxlen=self.l_prev)


def q_matrices(tau_i, tau_prev, Ts, count):
    """Stack of ``Q_j = exp(Gamma j Ts) int_0^Ts exp(-Gamma theta) d theta``, j = 1..count."""
    integral = int_expm_neg_gamma(tau_i, tau_prev, Ts)
    out = np.empty((count, 5, 5))
    for j in range(1, count + 1):
        out[j - 1] = expm_gamma_closed(tau_i, tau_prev, j * Ts) @ integral
    return out


def build_context(p_ego, p_prev):
    if abs(p_ego.Ts - p_prev.Ts) > 1e-15 * max(p_ego.Ts, p_prev.Ts):
        raise ConfigurationError(
            f"ego and predecessor sample periods differ ({p_ego.Ts!r} vs {p_prev.Ts!r})"
        )
    tau_i, tau_p, Ts = p_ego.tau, p_prev.tau, p_ego.Ts
    B_own = np.zeros(5)
    B_own[3] = 1.0 / tau_i
    B_prev = np.zeros(5)
    B_prev[4] = 1.0 / tau_p
    Q_all = q_matrices(tau_i, tau_p, Ts, max(p_ego.l, p_prev.l))
    ctx = PredictorContext(
        exp_gamma_D=expm_gamma_closed(tau_i, tau_p, p_ego.delay),
        exp_gamma_diff=expm_gamma_closed(tau_i, tau_p, p_ego.delay - p_prev.delay),
        Q_own=Q_all[: p_ego.l].copy(),
        Q_prev=Q_all[: p_prev.l].copy(),
        B_own=B_own,
        B_prev=B_prev,
    )
    ctx.reset()
    return ctx


def predictor_state(x, ctx):
    """Predicted state ``q_k``; the histories are read, never modified."""
    q = ctx.exp_gamma_D @ np.asarray(x, dtype=float)
    if ctx.l_own:
        q = q + np.asarray(ctx.own_history) @ ctx.own_weights
    if ctx.l_prev:
        q = q + np.asarray(ctx.prev_history) @ ctx.prev_weights
    return PredictorOutput(*q)


def control_step(x, u_prev_received, ctx, p, g):
    """One control sample: predict, apply the headway law, then record inputs.

    Must be called exactly once per sample and in time order; the context
    cannot detect misuse.
    """
    q = predictor_state(x, ctx)
    u = float(feedback_row(p, g) @ np.asarray(q))
    # histories hold strictly past samples, so push only after computing u_k
    if ctx.l_own:
        ctx.own_history.appendleft(u)
    if ctx.l_prev:
        ctx.prev_history.appendleft(float(u_prev_received))
    return u
