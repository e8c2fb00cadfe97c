"""Built-in scenarios: the reference five-vehicle platoon, its transient start, and the two-car run."""
from .predictor import ControlGains, VehicleParams
from .sim import NoiseConfig, ScenarioConfig

TS = 0.01
SIM_STEP = 0.001
STANDSTILL_GAP = 10.0

# leader first; vehicles 3 and 4 lags taken as seconds
REFERENCE_PLATOON = {
    "tau": [0.067, 0.067, 0.1, 0.2, 0.15],
    "headway": [1.0, 1.0, 1.0, 0.8, 0.8],
    "delay": [0.15, 0.3, 0.6, 0.4, 0.3],
    "comm_delay": [0.0, 0.02, 0.05, 0.04, 0.03],
    "alpha": [None, 7.5, 7.5, 5.0, 5.0],
    "b": [None, 12.5, 12.5, 10.0, 10.0],
    "c": [None, 0.0, 0.0, 1.0, 1.0],
}

EXPERIMENT_COMM_DELAY = 0.02
STEP_ACCEL = 1.5
CRUISE_SPEED = 3.0


def table_vehicles(count=5, Ts=TS, comm_delays=None):
    comm = comm_delays or REFERENCE_PLATOON["comm_delay"]
    return [
        VehicleParams(
            tau=REFERENCE_PLATOON["tau"][i],
            delay=REFERENCE_PLATOON["delay"][i],
            comm_delay=comm[i],
            headway=REFERENCE_PLATOON["headway"][i],
            standstill_gap=STANDSTILL_GAP,
            Ts=Ts,
        )
        for i in range(count)
    ]


def table_gains(count=5):
    return [None] + [
        ControlGains(REFERENCE_PLATOON["alpha"][i], REFERENCE_PLATOON["b"][i], REFERENCE_PLATOON["c"][i])
        for i in range(1, count)
    ]


def step_profile(start):
    """Leader +-1.5 m/s^2 one-second pulses that leave it back at its start speed."""
    a = STEP_ACCEL
    return [
        (start, a), (start + 1.0, 0.0),
        (start + 11.0, -a), (start + 12.0, 0.0),
        (start + 22.0, -a), (start + 23.0, 0.0),
        (start + 33.0, a), (start + 34.0, 0.0),
    ]


def fig4(noise=False, seed=0):
    """Five vehicles: followers at 10 m/s, leader cruising at 9 m/s with u = 0."""
    vehicles = table_vehicles()
    speeds = [9.0] + [10.0] * 4
    gaps = [0.0, 9.5 + STANDSTILL_GAP] + [vehicles[i].headway * 10.0 + STANDSTILL_GAP for i in range(2, 5)]
    return ScenarioConfig(
        vehicles=vehicles,
        gains=table_gains(),
        init_speed=speeds,
        init_gap=gaps,
        leader_profile=[],
        sim_step=SIM_STEP,
        duration=50.0,
        noise=NoiseConfig(enabled=noise, seed=seed),
        name="fig4",
    )


def experiment(noise=False, seed=0):
    """Two cars from standstill; leader to 3 m/s, then acceleration pulses."""
    vehicles = table_vehicles(2, comm_delays=[0.0, EXPERIMENT_COMM_DELAY])
    profile = [(1.0, STEP_ACCEL), (3.0, 0.0)] + step_profile(15.0)
    return ScenarioConfig(
        vehicles=vehicles,
        gains=table_gains(2),
        init_speed=[0.0, 0.0],
        init_gap=[0.0, STANDSTILL_GAP],
        leader_profile=profile,
        sim_step=SIM_STEP,
        duration=60.0,
        noise=NoiseConfig(enabled=noise, seed=seed),
        name="experiment",
    )


def experiment4(noise=False, seed=0):
    """Experiment leader profile with all four reference followers at 3 m/s equilibrium."""
    vehicles = table_vehicles()
    v0 = CRUISE_SPEED
    return ScenarioConfig(
        vehicles=vehicles,
        gains=table_gains(),
        init_speed=[v0] * 5,
        init_gap=[0.0] + [p.headway * v0 + p.standstill_gap for p in vehicles[1:]],
        leader_profile=step_profile(2.0),
        sim_step=SIM_STEP,
        duration=60.0,
        noise=NoiseConfig(enabled=noise, seed=seed),
        name="experiment4",
    )


def ablation(noise=False, seed=0):
    """``experiment4`` run long enough for an uncompensated follower to diverge visibly.

    Switch a follower's controller to ``"nominal"`` to compare against the
    predictor run of the same scenario.
    """
    cfg = experiment4(noise, seed)
    cfg.duration = 150.0
    cfg.name = "ablation"
    return cfg


def table1(noise=False, seed=0):
    """Reference platoon at 10 m/s equilibrium, leader u = 0."""
    vehicles = table_vehicles()
    return ScenarioConfig(
        vehicles=vehicles,
        gains=table_gains(),
        init_speed=[10.0] * 5,
        init_gap=[0.0] + [p.headway * 10.0 + p.standstill_gap for p in vehicles[1:]],
        sim_step=SIM_STEP,
        duration=20.0,
        noise=NoiseConfig(enabled=noise, seed=seed),
        name="table1",
    )


SCENARIOS = {
    "fig4": fig4,
    "experiment": experiment,
    "experiment4": experiment4,
    "ablation": ablation,
    "table1": table1,
}


def get(name, noise=False, seed=0):
    """Resolve a preset. ``vehicleN`` selects the reference platoon, follower N."""
    if name.startswith("vehicle") and name[7:].isdigit():
        idx = int(name[7:])
        if not 1 <= idx <= 4:
            raise KeyError(name)
        return table1(noise, seed), idx
    return SCENARIOS[name](noise, seed), None
