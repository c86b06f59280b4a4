"""Latest comfortable braking and steering against a slower lead vehicle."""

from critzone.braking import BrakeOutcome, avoid_by_braking, brake_boundary_distance
from critzone.errors import ConvergenceError, CritZoneError, DomainError, ScenarioError, SingularDerivativeError
from critzone.models import (
    ComfortBounds,
    LateralSystem,
    ModelKind,
    SteeringLimits,
    VehicleParams,
    build_system,
    friction_angle_limit,
    friction_threshold,
    steady_state_angle,
    steady_state_rate,
    steering_limits,
)
from critzone.propagate import BrakeState, lateral_state, output, propagate
from critzone.scenario import Scenario, kmh
from critzone.steering import (
    Algorithm,
    BoundaryProblem,
    RootConfig,
    SteerOutcome,
    avoid_by_steering,
    avoid_by_steering_backward,
    avoid_by_steering_forward,
    avoid_by_steering_simplified,
    halley,
    newton_raphson,
)
from critzone.zone import ZoneBoundary, compare_zones, compute_zone, steer_boundary_distance

__version__ = "0.1.0"
