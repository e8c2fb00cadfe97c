"""Sampled-data predictor-based CACC for platoons with distinct actuation delays."""
__version__ = "0.1.0"

from .errors import ConfigurationError, DomainError, EvaluationError
from .predictor import (
    ControlGains,
    MeasurementVector,
    PredictorContext,
    PredictorOutput,
    VehicleParams,
    build_context,
    control_step,
    nominal_control,
    predictor_state,
)
from .sim import ScenarioConfig, SimOutput, compute_metrics, simulate
from .stability import (
    ContinuousTF,
    DiscreteTransferFunction,
    string_stability_margin,
    sweep_alpha_b,
    sweep_delay_diff,
    sweep_Ts,
    tustin_tf,
    vehicle_stability_matrix,
)
