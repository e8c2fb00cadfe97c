import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from predictive_cacc.errors import ConfigurationError
from predictive_cacc.matrix_core import expm_gamma_closed, int_expm_neg_gamma
from predictive_cacc.predictor import (
    ControlGains,
    MeasurementVector,
    PredictorContext,
    VehicleParams,
    build_context,
    control_step,
    nominal_control,
    predictor_state,
)

from oracles import exact_transition

TS = 0.01
finite = st.floats(-50, 50)
vectors = st.lists(finite, min_size=5, max_size=5)


def pair(l_i, l_prev, tau_i=0.067, tau_prev=0.067, l_c=0):
    ego = VehicleParams(tau=tau_i, delay=l_i * TS, comm_delay=l_c * TS, headway=1.0, Ts=TS)
    prev = VehicleParams(tau=tau_prev, delay=l_prev * TS, Ts=TS)
    return ego, prev


def test_params_sample_counts():
    p = VehicleParams(tau=0.1, delay=0.6, comm_delay=0.05, Ts=0.01)
    assert (p.l, p.l_c) == (60, 5)
    assert p.l * p.Ts == p.delay


@pytest.mark.parametrize("field, value", [
    ("tau", 0.0), ("headway", -1.0), ("standstill_gap", 0.0), ("Ts", 0.0),
    ("delay", -0.01), ("comm_delay", -0.01), ("tau", float("nan")),
])
def test_params_reject_out_of_domain(field, value):
    kwargs = dict(tau=0.1, delay=0.3)
    kwargs[field] = value
    with pytest.raises(ConfigurationError):
        VehicleParams(**kwargs)


def test_off_grid_delay_strict_and_rounded(caplog):
    with pytest.raises(ConfigurationError, match="delay"):
        VehicleParams(tau=0.1, delay=0.155, Ts=0.01)
    p = VehicleParams(tau=0.1, delay=0.156, Ts=0.01, round_delays=True)
    assert p.l == 16 and p.delay == pytest.approx(0.16)
    assert "rounded" in caplog.text


@pytest.mark.parametrize("alpha, b, c", [(0.0, 1.0, 0.0), (1.0, 0.0, 0.0), (1.0, 1.0, -0.1)])
def test_gains_reject_out_of_domain(alpha, b, c):
    with pytest.raises(ConfigurationError):
        ControlGains(alpha, b, c)


def test_nominal_examples():
    p = VehicleParams(tau=1.0, delay=0.0, headway=1.0)
    g = ControlGains(1.0, 1.0, 0.0)
    assert nominal_control((0, 0, 0, 0, 0), p, g) == 0.0
    assert nominal_control((1, 0, 0, 0, 0), p, g) == 1.0
    v1 = VehicleParams(tau=0.067, delay=0.3, headway=1.0)
    u = nominal_control(MeasurementVector(0, 10, 9, 0, 0), v1, ControlGains(7.5, 12.5, 0.0))
    assert u == pytest.approx(0.067 * 7.5 * -10 + 0.067 * 12.5 * -1, abs=1e-12)
    assert u == pytest.approx(-5.8625, abs=1e-12)


def test_nominal_acceleration_term():
    p = VehicleParams(tau=0.2, delay=0.0, headway=0.8)
    u = nominal_control((0, 0, 0, -1.0, 2.0), p, ControlGains(5.0, 10.0, 1.0))
    assert u == pytest.approx(0.2 * 1.0 * 3.0)


def test_context_reference_pairs(vehicles):
    ctx = build_context(vehicles[1], vehicles[0])
    assert (ctx.l_own, ctx.l_prev) == (30, 15)
    assert len(ctx.Q_own) == 30 and len(ctx.own_history) == 30
    assert np.array_equal(ctx.B_own, [0, 0, 0, 1 / 0.067, 0])
    assert np.array_equal(ctx.B_prev, [0, 0, 0, 0, 1 / 0.067])
    assert not any(ctx.own_history) and not any(ctx.prev_history)

    ctx3 = build_context(vehicles[3], vehicles[2])
    np.testing.assert_allclose(ctx3.exp_gamma_diff, expm_gamma_closed(0.2, 0.1, -0.2), rtol=1e-13, atol=1e-14)


def test_context_equal_delays_identity_shift():
    ego, prev = pair(20, 20, 0.1, 0.2)
    assert np.array_equal(build_context(ego, prev).exp_gamma_diff, np.eye(5))


def test_context_q_tables():
    ego, prev = pair(7, 4, 0.1, 0.15)
    ctx = build_context(ego, prev)
    integral = int_expm_neg_gamma(0.1, 0.15, TS)
    for j in range(1, 8):
        np.testing.assert_allclose(ctx.Q_own[j - 1], expm_gamma_closed(0.1, 0.15, j * TS) @ integral,
                                   rtol=1e-14, atol=1e-18)
    np.testing.assert_array_equal(ctx.Q_prev, ctx.Q_own[:4])


def test_context_mismatched_Ts():
    ego = VehicleParams(tau=0.1, delay=0.2, Ts=0.01)
    prev = VehicleParams(tau=0.1, delay=0.2, Ts=0.02)
    with pytest.raises(ConfigurationError, match="sample periods"):
        build_context(ego, prev)


def test_predictor_trivial_cases():
    ego, prev = pair(0, 0)
    x = (1.0, 2.0, 3.0, 4.0, 5.0)
    assert predictor_state(x, build_context(ego, prev)) == pytest.approx(x, abs=0)
    ego, prev = pair(30, 15)
    ctx = build_context(ego, prev)
    assert np.all(np.asarray(predictor_state((0,) * 5, ctx)) == 0)


def test_predictor_does_not_mutate():
    ego, prev = pair(5, 3)
    ctx = build_context(ego, prev)
    ctx.own_history.extendleft([1.0, 2.0])
    before = (list(ctx.own_history), list(ctx.prev_history))
    predictor_state((1, 2, 3, 4, 5), ctx)
    assert (list(ctx.own_history), list(ctx.prev_history)) == before


def test_control_step_zero():
    ego, prev = pair(30, 15)
    ctx = build_context(ego, prev)
    assert control_step((0,) * 5, 0.0, ctx, ego, ControlGains(7.5, 12.5)) == 0.0


@settings(max_examples=200, deadline=None)
@given(vectors, st.floats(0.05, 0.3), st.floats(0.5, 20), st.floats(0.5, 30), st.floats(0, 2))
def test_delay_free_reduction(x, tau, alpha, b, c):
    ego, prev = pair(0, 0, tau_i=tau)
    g = ControlGains(alpha, b, c)
    ctx = build_context(ego, prev)
    u = control_step(x, 0.3, ctx, ego, g)
    assert u == pytest.approx(nominal_control(x, ego, g), rel=1e-12, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(vectors, st.lists(finite, min_size=12, max_size=12), st.floats(-5, 5))
def test_linearity(x, hist, beta):
    ego, prev = pair(7, 5, 0.1, 0.2)
    g = ControlGains(5.0, 10.0, 1.0)

    def run(scale):
        ctx = build_context(ego, prev)
        ctx.own_history.extendleft([scale * h for h in reversed(hist[:7])])
        ctx.prev_history.extendleft([scale * h for h in reversed(hist[7:])])
        return control_step([scale * v for v in x], 0.0, ctx, ego, g)

    base = run(1.0)
    assert run(beta) == pytest.approx(beta * base, rel=1e-10, abs=1e-10)


class _RecordingDeque(list):
    """Test double standing in for the history buffers."""

    def __init__(self, size):
        super().__init__([0.0] * size)
        self.size = size
        self.pushes = []

    def appendleft(self, value):
        self.pushes.append(value)
        self.insert(0, value)
        del self[self.size:]


def test_buffer_discipline():
    ego, prev = pair(6, 4, 0.1, 0.15)
    g = ControlGains(5.0, 10.0, 1.0)
    ctx = build_context(ego, prev)
    ctx.own_history = _RecordingDeque(6)
    ctx.prev_history = _RecordingDeque(4)
    rng = np.random.default_rng(3)
    issued, received = [], []
    for k in range(15):
        seen = list(ctx.own_history)
        expect = issued[::-1][:6] + [0.0] * max(0, 6 - len(issued))
        assert seen == expect  # u_{k-1} ... u_{k-l}, zero before start
        r = float(rng.normal())
        issued.append(control_step(rng.normal(size=5), r, ctx, ego, g))
        received.append(r)
        assert ctx.own_history.pushes == issued
        assert ctx.prev_history.pushes == received
        assert len(ctx.own_history) == 6 and len(ctx.prev_history) == 4
    assert list(ctx.prev_history) == received[::-1][:4]


def test_reset_clears_history():
    ego, prev = pair(3, 2)
    ctx = build_context(ego, prev)
    control_step((1, 1, 1, 1, 1), 1.0, ctx, ego, ControlGains(1, 1))
    ctx.reset()
    assert list(ctx.own_history) == [0.0] * 3 and list(ctx.prev_history) == [0.0] * 2


def run_prediction_check(l_i, l_prev, tau_i, tau_prev, l_c=0, steps=150, seed=0):
    """Closed loop on the exact Ts-sampled pair model; returns worst prediction errors."""
    ego, prev = pair(l_i, l_prev, tau_i, tau_prev, l_c)
    g = ControlGains(7.5, 12.5, 0.5)
    ctx = build_context(ego, prev)
    Phi, Bu = exact_transition(tau_i, tau_prev, TS)
    rng = np.random.default_rng(seed)
    x = np.array([2.0, 10.0, 9.0, 0.0, 0.0]) + rng.normal(size=5) * [1, 0.5, 0.5, 1, 1]
    states, preds, cmds = [x.copy()], [], []
    horizon = steps + l_i + 1
    for k in range(horizon):
        xs = states[k]
        xm = xs.copy()
        xm[[2, 4]] = states[max(k - l_c, 0)][[2, 4]]
        preds.append(np.asarray(predictor_state(xm, ctx)))
        cmds.append(control_step(xm, 0.0, ctx, ego, g))
        applied = cmds[k - l_i] if k >= l_i else 0.0
        states.append(Phi @ xs + Bu * applied)
    own = max(np.max(np.abs(preds[k][[1, 3]] - states[k + l_i][[1, 3]])) for k in range(steps))
    prev_err = max(
        np.max(np.abs(preds[k][[2, 4]] - states[k - l_c + l_i][[2, 4]])) for k in range(l_c, steps)
    )
    full = max(np.max(np.abs(preds[k] - states[k + l_i])) for k in range(steps)) if l_c == 0 else None
    return own, prev_err, full


@pytest.mark.parametrize("l_i, l_prev", [(30, 15), (60, 30), (40, 60), (1, 0), (0, 5)])
def test_prediction_exactness(l_i, l_prev):
    own, prev_err, full = run_prediction_check(l_i, l_prev, 0.1, 0.067)
    assert own <= 1e-8 and prev_err <= 1e-8 and full <= 1e-8


@pytest.mark.parametrize("l_c", [2, 5])
def test_prediction_with_comm_delay(l_c):
    own, prev_err, _ = run_prediction_check(40, 30, 0.2, 0.1, l_c=l_c)
    assert own <= 1e-8
    assert prev_err <= 1e-8
