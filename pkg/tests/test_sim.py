import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from predictive_cacc import presets
from predictive_cacc.errors import ConfigurationError
from predictive_cacc.predictor import ControlGains, VehicleParams
from predictive_cacc.sim import (
    DelayLine,
    NoiseConfig,
    ScenarioConfig,
    VehicleState,
    compute_metrics,
    exact_zoh_step,
    leader_command,
    simulate,
)

from oracles import reference_simulate, scalar_lag_reference


def small_platoon(duration=6.0, noise=False, **kw):
    """Three vehicles with unequal lags and delays, comm delay on the last link."""
    vehicles = [
        VehicleParams(tau=0.1, delay=0.05, Ts=0.01),
        VehicleParams(tau=0.067, delay=0.12, comm_delay=0.0, headway=0.9, Ts=0.01),
        VehicleParams(tau=0.2, delay=0.07, comm_delay=0.03, headway=1.2, Ts=0.01),
    ]
    cfg = ScenarioConfig(
        vehicles=vehicles,
        gains=[None, ControlGains(7.5, 12.5), ControlGains(5.0, 10.0, 1.0)],
        init_speed=[5.0, 6.0, 4.5],
        init_gap=[0.0, 15.0, 17.0],
        init_accel=[0.0, 0.3, -0.2],
        leader_profile=[(0.5, 1.0), (1.5, 0.0), (3.0, -0.8), (3.7, 0.0)],
        sim_step=0.001,
        duration=duration,
        noise=NoiseConfig(enabled=noise, seed=11),
        **kw,
    )
    return cfg


# exact_zoh_step

def test_zoh_equilibrium():
    st0 = VehicleState(12.0, 7.0, 0.0)
    assert exact_zoh_step(st0, 7.0, 0.0, 0.067, 0.001) == (12.0, 7.0, 0.0)


def test_zoh_step_response_value():
    a = exact_zoh_step(VehicleState(0, 0, 0), 0.0, 1.0, 0.067, 0.001).accel
    assert a == pytest.approx(1 - math.exp(-0.001 / 0.067), abs=1e-15)
    assert a == pytest.approx(0.014814, abs=1e-6)
    assert a == pytest.approx(scalar_lag_reference(0.0, 1.0, 0.067, 0.001, 2000), abs=1e-13)


@settings(max_examples=100, deadline=None)
@given(st.floats(-20, 20), st.floats(0, 30), st.floats(-3, 3), st.floats(0, 30),
       st.floats(-3, 3), st.floats(0.05, 0.3), st.floats(1e-4, 0.05))
def test_zoh_halving(gap, v, a, vp, u, tau, dt):
    full = exact_zoh_step(VehicleState(gap, v, a), vp, u, tau, dt)
    half = exact_zoh_step(VehicleState(gap, v, a), vp, u, tau, dt / 2)
    half = exact_zoh_step(half, vp, u, tau, dt / 2)
    np.testing.assert_allclose(half, full, rtol=1e-12, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-20, 20), st.floats(0, 30), st.floats(-3, 3), st.floats(0, 30),
       st.floats(-3, 3), st.floats(0.05, 0.3), st.floats(1e-4, 0.5))
def test_zoh_matches_matrix_exponential(gap, v, a, vp, u, tau, dt):
    A = np.zeros((5, 5))
    A[0, 1], A[0, 4] = -1.0, 1.0  # gap' = v_prev - v
    A[1, 2] = 1.0
    A[2, 2], A[2, 3] = -1.0 / tau, 1.0 / tau
    ref = expm(A * dt) @ np.array([gap, v, a, u, vp])
    got = exact_zoh_step(VehicleState(gap, v, a), vp, u, tau, dt)
    np.testing.assert_allclose(got, ref[:3], rtol=1e-10, atol=1e-10)


# delay lines

@pytest.mark.parametrize("latency", range(1, 61))
def test_delay_line_impulse(latency):
    line = DelayLine(latency, "u")
    out = [line.push(1.0 if n == 0 else 0.0) for n in range(latency + 5)]
    assert out.index(1.0) == latency
    assert sum(out) == 1.0


def test_delay_line_zero_latency_and_fill():
    assert DelayLine(0).push(3.5) == 3.5
    line = DelayLine(2, "v", fill=9.0)
    assert [line.push(x) for x in (1.0, 2.0, 3.0)] == [9.0, 9.0, 1.0]


def test_delay_line_from_seconds():
    assert DelayLine.from_seconds(0.6, 0.001).latency == 600
    with pytest.raises(ConfigurationError):
        DelayLine.from_seconds(0.0015, 0.001)
    with pytest.raises(ConfigurationError):
        DelayLine(2.5)


# leader profile

def test_leader_command():
    assert leader_command([], 12.3) == 0.0
    prof = [(1.0, 1.5), (3.0, 0.0), (5.0, -1.5)]
    assert [leader_command(prof, t) for t in (0.5, 1.0, 2.9, 3.0, 7.0)] == [0.0, 1.5, 1.5, 0.0, -1.5]


def test_experiment_leader_reaches_cruise():
    cfg, _ = presets.get("experiment")
    out = simulate(cfg)
    t = out.time
    assert out.speed[np.searchsorted(t, 14.0), 0] == pytest.approx(3.0, abs=1e-9)
    # the follower converges to the leader's cruise speed
    assert out.speed[-1, 1] == pytest.approx(3.0, abs=0.01)
    assert not out.metrics.collision


# config validation

@pytest.mark.parametrize("change, msg", [
    (dict(sim_step=0.003), "does not divide"),
    (dict(sim_step=0.0), "positive"),
    (dict(duration=1.0005), "multiple of sim_step"),
    (dict(leader_profile=[(2.0, 1.0), (1.0, 0.0)]), "non-decreasing"),
    (dict(saturation=-1.0), "saturation"),
])
def test_config_errors(change, msg):
    cfg = small_platoon()
    for k, v in change.items():
        setattr(cfg, k, v)
    with pytest.raises(ConfigurationError, match=msg):
        simulate(cfg)


def test_config_errors_structure():
    cfg = small_platoon()
    cfg.controllers[2] = "pid"
    with pytest.raises(ConfigurationError, match="controller"):
        simulate(cfg)
    cfg = small_platoon()
    cfg.init_gap = cfg.init_gap[:2]
    with pytest.raises(ConfigurationError, match="init_gap"):
        simulate(cfg)
    cfg = small_platoon()
    cfg.vehicles[1] = VehicleParams(tau=0.1, delay=0.1, Ts=0.02)
    with pytest.raises(ConfigurationError, match="Ts"):
        simulate(cfg)


# whole-run properties

def test_output_shapes():
    cfg = small_platoon(duration=2.0)
    out = simulate(cfg)
    assert len(out.time) == 2001
    assert out.speed.shape == (2001, 3) and out.gap.shape == (2001, 2)
    assert out.u_applied.shape == out.u_commanded.shape == (2001, 3)


@pytest.mark.parametrize("noise", [False, True])
def test_kernel_matches_reference_simulator(noise):
    cfg = small_platoon(duration=4.0, noise=noise)
    out = simulate(cfg)
    speeds, gaps = reference_simulate(cfg)
    np.testing.assert_allclose(out.speed, speeds, rtol=0, atol=1e-9)
    np.testing.assert_allclose(out.gap, gaps, rtol=0, atol=1e-9)


def test_kernel_matches_reference_with_nominal_and_saturation():
    cfg = small_platoon(duration=3.0, saturation=0.5)
    cfg.controllers[2] = "nominal"
    out = simulate(cfg)
    speeds, gaps = reference_simulate(cfg)
    np.testing.assert_allclose(out.speed, speeds, rtol=0, atol=1e-9)
    np.testing.assert_allclose(out.gap, gaps, rtol=0, atol=1e-9)
    assert np.max(np.abs(out.u_commanded[:, 1:])) <= 0.5  # the leader profile is not clipped


def test_actuation_delay_applied():
    cfg = small_platoon(duration=2.0)
    out = simulate(cfg)
    lat = cfg.vehicles[1].l * 10
    np.testing.assert_array_equal(out.u_applied[lat:, 1], out.u_commanded[:-lat, 1])
    assert np.all(out.u_applied[:lat, 1] == 0.0)


@pytest.mark.parametrize("row", range(5))
def test_equilibrium_invariance(row):
    ref = presets.REFERENCE_PLATOON
    p0 = VehicleParams(tau=ref["tau"][max(row - 1, 0)], delay=ref["delay"][max(row - 1, 0)])
    p = VehicleParams(tau=ref["tau"][row], delay=ref["delay"][row], comm_delay=ref["comm_delay"][row],
                      headway=ref["headway"][row])
    gi = max(row, 1)
    g = ControlGains(ref["alpha"][gi], ref["b"][gi], ref["c"][gi])
    v0 = 8.0
    cfg = ScenarioConfig(vehicles=[p0, p], gains=[None, g], init_speed=[v0, v0],
                         init_gap=[0.0, p.headway * v0 + p.standstill_gap], duration=10.0)
    out = simulate(cfg)
    assert np.max(np.abs(out.speed - v0)) <= 1e-9
    assert np.max(np.abs(out.gap - cfg.init_gap[1])) <= 1e-9
    assert np.max(np.abs(out.accel)) <= 1e-9
    assert np.max(np.abs(out.u_commanded)) <= 1e-9


def test_equilibrium_whole_reference_platoon():
    cfg, _ = presets.get("table1")
    out = simulate(cfg)
    assert np.max(np.abs(out.speed - 10.0)) <= 1e-9
    assert np.max(np.abs(out.gap - out.gap[0])) <= 1e-9
    assert np.all(out.metrics.l2_speed_dev == 0)


def test_halving_sim_step():
    cfg = small_platoon(duration=5.0)
    coarse = simulate(cfg)
    cfg.sim_step = 0.0005
    fine = simulate(cfg)
    np.testing.assert_allclose(fine.speed[::2], coarse.speed, rtol=0, atol=1e-9)
    np.testing.assert_allclose(fine.gap[::2], coarse.gap, rtol=0, atol=1e-9)
    np.testing.assert_allclose(fine.accel[::2], coarse.accel, rtol=0, atol=1e-9)


def test_determinism():
    a = simulate(small_platoon(noise=True))
    b = simulate(small_platoon(noise=True))
    for name in ("speed", "gap", "accel", "u_applied", "u_commanded"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()
    c = small_platoon(noise=True)
    c.noise.seed = 12
    assert not np.array_equal(simulate(c).speed, a.speed)


def test_gap_conservation():
    cfg = small_platoon(duration=10.0)
    out = simulate(cfg)
    dt = cfg.sim_step
    for i in range(1, 3):
        rel = out.speed[:, i - 1] - out.speed[:, i]
        integral = np.concatenate([[0.0], np.cumsum(0.5 * dt * (rel[1:] + rel[:-1]))])
        assert np.max(np.abs(out.gap[:, i - 1] - (out.gap[0, i - 1] + integral))) <= 1e-6


def test_metrics_recomputable_and_collision_flag():
    cfg = small_platoon(duration=4.0)
    out = simulate(cfg)
    again = compute_metrics(out, cfg)
    np.testing.assert_array_equal(again.l2_speed_dev, out.metrics.l2_speed_dev)
    out.gap[100, 1] = -0.1
    assert compute_metrics(out, cfg).collision


def test_collision_is_reported_not_prevented():
    cfg = small_platoon(duration=4.0)
    cfg.init_gap = [0.0, 1.0, 17.0]
    cfg.init_speed = [5.0, 12.0, 4.5]
    out = simulate(cfg)
    assert out.metrics.collision
    assert out.gap.min() < 0
    assert len(out.time) == 4001


@pytest.mark.slow
def test_uncompensated_long_delay_oscillation_grows():
    cfg, _ = presets.get("ablation")
    cfg.controllers[2] = "nominal"
    out = simulate(cfg)
    dev = np.abs(out.speed[:, 2] - out.metrics.v_ref)
    # windows after the last leader pulse (ends at t = 36 s)
    windows = [dev[(out.time >= t0) & (out.time < t0 + 20)].max() for t0 in (50, 70, 90, 110, 130)]
    assert all(b > a for a, b in zip(windows, windows[1:]))
    assert windows[-1] > 2 * windows[0]
