"""Reference problems used by the benchmarks, the CLI and the test-suite."""

from __future__ import annotations

import math

import numpy as np

from critzone.models import ComfortBounds, VehicleParams, build_system, steering_limits
from critzone.scenario import Scenario, kmh
from critzone.steering import BoundaryProblem

__all__ = [
    "THREE_ROOT_TARGET",
    "ten_offsets",
    "three_root_problem",
    "urban_approach",
]

# lateral target (y_L + y_margin, m) for the three-root residual below;
# chosen so the largest crossing lands at about 2.14 s
THREE_ROOT_TARGET = 2.0


def three_root_problem(params: VehicleParams | None = None) -> BoundaryProblem:
    """Dynamic model at 80 km/h, already drifting, steering left at the comfort rate.

    The residual has three roots; right-started iterations must find the largest.
    """
    params = params or VehicleParams()
    v = kmh(80.0)
    system = build_system(params, "dm", v)
    limits = steering_limits(params, ComfortBounds(), 1.0, v, "dm")
    x0 = np.array([2.75, math.radians(2.0), 0.5, 0.0, math.radians(-2.0)])
    return BoundaryProblem(system, x0, limits.omega_max, THREE_ROOT_TARGET, 0.0)


def urban_approach(v_x_kmh: float = 90.0, v_L_kmh: float = 20.0, **changes) -> Scenario:
    """Ego closing on a slow lead with all auxiliary lateral states at zero."""
    return Scenario(v_x=kmh(v_x_kmh), v_L=kmh(v_L_kmh), **changes)


def ten_offsets(lane_width: float = 3.7) -> np.ndarray:
    """Ten uniformly spaced initial offsets across the lane."""
    return np.linspace(-lane_width, 0.0, 10)
