"""Critical zones: steering and braking boundaries swept over lateral offsets."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from critzone.braking import brake_boundary_distance
from critzone.errors import DomainError
from critzone.models import ModelKind, build_system, steering_limits
from critzone.scenario import Scenario
from critzone.steering import (
    Algorithm,
    RootConfig,
    SteerOutcome,
    SteeringPlan,
    Trajectory,
    avoid_by_steering,
    forward_plan,
    sample_trajectory,
)

__all__ = [
    "BoundaryPoint",
    "LANE_TOLERANCE",
    "Scenario",
    "ZoneBoundary",
    "ZoneComparison",
    "compare_zones",
    "compute_zone",
    "default_grid",
    "leaves_lane",
    "make_grid",
    "steer_boundary",
    "steer_boundary_distance",
]

LANE_TOLERANCE = 0.01  # m
FORWARD_STEP = 0.2  # m
FORWARD_MAX_GAP = 1000.0  # m


def make_grid(lo: float, hi: float, step: float) -> np.ndarray:
    """Inclusive, evenly spaced grid from ``lo`` to ``hi``."""
    if not step > 0 or not hi >= lo:
        raise DomainError("grid needs step > 0 and hi >= lo")
    n = int(round((hi - lo) / step))
    if not math.isclose(lo + n * step, hi, abs_tol=1e-9):
        raise DomainError(f"grid step {step} does not divide [{lo}, {hi}]")
    return np.round(lo + step * np.arange(n + 1), 10)


def default_grid(lane_width: float = 3.7) -> np.ndarray:
    return make_grid(-lane_width, 0.0, 0.1)


def _corner_paths(traj: Trajectory, scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    p = scenario.params
    psi = traj.psi
    front = traj.y + p.L_f * psi - 0.5 * p.W
    rear = traj.y - (p.L - p.L_f) * psi - 0.5 * p.W
    return front, rear


def leaves_lane(traj: Trajectory, scenario: Scenario, tol: float = LANE_TOLERANCE) -> bool:
    """True if a right-side corner crosses the right lane marking."""
    mark = scenario.lane_mark(traj.kind)
    front, rear = _corner_paths(traj, scenario)
    return bool(min(front.min(), rear.min()) < mark - tol)


@dataclass(frozen=True)
class BoundaryPoint:
    offset: float
    distance: float
    excluded: bool
    outcome: SteerOutcome | None
    trajectory: Trajectory | None = None


def _forward_search(scenario: Scenario, kind: ModelKind, step: float, max_gap: float) -> tuple[float, SteeringPlan]:
    system = build_system(scenario.params, kind, scenario.v_x)
    limits = steering_limits(scenario.params, scenario.comfort, scenario.mu, scenario.v_x, kind)
    x0 = scenario.initial_state(kind)
    target = 0.5 * scenario.params.W + scenario.y_L(kind) + scenario.y_margin
    H = system.C[0]
    k = 0
    while True:
        gap = scenario.x_margin + k * step
        if gap > max_gap:
            raise DomainError(f"no avoidable gap found below {max_gap} m")
        plan = forward_plan(system, x0, limits, (gap - scenario.x_margin) / scenario.closing_speed)
        clearance = float(H @ plan.final_state) - target
        # the zero-length probe only counts if the corner is strictly clear;
        # touching at t = 0 says nothing about the path that follows
        if clearance > 0 or (k > 0 and clearance == 0):
            return gap, plan
        k += 1


def steer_boundary(
    scenario: Scenario,
    model="dm",
    algorithm=Algorithm.BACKWARD,
    offset: float | None = None,
    config: RootConfig = RootConfig(),
    dt: float = 0.01,
    check_lane: bool = True,
    keep_trajectory: bool = False,
    forward_step: float = FORWARD_STEP,
) -> BoundaryPoint:
    """Boundary gap for one lateral offset, with lane-exit screening.

    Distances are bumper-to-rear gaps including ``x_margin``.
    """
    kind = ModelKind.parse(model)
    algorithm = Algorithm.parse(algorithm)
    if offset is not None:
        scenario = scenario.replace(offset=float(offset))
    if algorithm is Algorithm.FORWARD:
        distance, plan = _forward_search(scenario, kind, forward_step, FORWARD_MAX_GAP)
        outcome = None
    else:
        outcome = avoid_by_steering(scenario, kind, algorithm, config, dt)
        distance, plan = outcome.required_gap, outcome.plan
    traj = None
    if (check_lane or keep_trajectory) and plan.t_s > 0:
        traj = sample_trajectory(plan, dt)
    excluded = bool(check_lane and traj is not None and leaves_lane(traj, scenario))
    return BoundaryPoint(
        offset=scenario.offset,
        distance=math.nan if excluded else float(distance),
        excluded=excluded,
        outcome=outcome,
        trajectory=traj if keep_trajectory else None,
    )


def steer_boundary_distance(scenario: Scenario, model="dm", algorithm=Algorithm.BACKWARD,
                            offset: float | None = None, **kwargs) -> float:
    """Boundary gap in metres; NaN when the manoeuvre leaves the lane."""
    return steer_boundary(scenario, model, algorithm, offset, **kwargs).distance


@dataclass(frozen=True)
class ZoneBoundary:
    offsets: np.ndarray
    steer_distance: np.ndarray
    steer_ttc: np.ndarray
    brake_distance: float
    brake_ttc: float
    excluded: np.ndarray
    model: ModelKind
    algorithm: Algorithm
    closing_speed: float
    trajectories: tuple[Trajectory | None, ...] | None = None

    def distance_at(self, offset: float) -> float:
        i = int(np.argmin(np.abs(self.offsets - offset)))
        if not math.isclose(self.offsets[i], offset, abs_tol=1e-9):
            raise KeyError(f"offset {offset} not on grid")
        return float(self.steer_distance[i])

    def ttc_at(self, offset: float) -> float:
        return self.distance_at(offset) / self.closing_speed

    def rows(self):
        for o, d, t in zip(self.offsets, self.steer_distance, self.steer_ttc):
            yield float(o), float(d), float(t), self.brake_distance, self.brake_ttc


def compute_zone(
    scenario: Scenario,
    model="dm",
    algorithm=Algorithm.BACKWARD,
    grid=None,
    config: RootConfig = RootConfig(),
    dt: float = 0.01,
    threads: int = 1,
    trajectories: bool = False,
    check_lane: bool = True,
) -> ZoneBoundary:
    """Steering boundary for every offset in ``grid`` plus the braking boundary."""
    kind = ModelKind.parse(model)
    algorithm = Algorithm.parse(algorithm)
    offsets = default_grid(scenario.lane_width) if grid is None else np.asarray(grid, dtype=float)
    if offsets.ndim != 1 or offsets.size == 0:
        raise DomainError("offset grid must be a nonempty 1-D sequence")
    if offsets.size > 1 and not np.all(np.diff(offsets) > 0):
        raise DomainError("offset grid must be strictly increasing")

    def one(o):
        return steer_boundary(scenario, kind, algorithm, float(o), config, dt, check_lane, trajectories)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            points = list(pool.map(one, offsets))
    else:
        points = [one(o) for o in offsets]

    dist = np.array([p.distance for p in points])
    cs = scenario.closing_speed
    brake = brake_boundary_distance(cs, scenario.a_b, scenario.comfort, scenario.x_margin)
    return ZoneBoundary(
        offsets=offsets.copy(),
        steer_distance=dist,
        steer_ttc=dist / cs,
        brake_distance=brake,
        brake_ttc=brake / cs,
        excluded=np.array([p.excluded for p in points]),
        model=kind,
        algorithm=algorithm,
        closing_speed=cs,
        trajectories=tuple(p.trajectory for p in points) if trajectories else None,
    )


@dataclass(frozen=True)
class ZoneComparison:
    offsets: np.ndarray
    distance_delta: np.ndarray
    ttc_delta: np.ndarray

    @property
    def max_abs_distance(self) -> float:
        return float(np.nanmax(np.abs(self.distance_delta))) if np.any(np.isfinite(self.distance_delta)) else math.nan

    @property
    def max_abs_ttc(self) -> float:
        return float(np.nanmax(np.abs(self.ttc_delta))) if np.any(np.isfinite(self.ttc_delta)) else math.nan


def compare_zones(a: ZoneBoundary, b: ZoneBoundary) -> ZoneComparison:
    """Signed per-offset differences ``b - a``."""
    if a.offsets.shape != b.offsets.shape or not np.allclose(a.offsets, b.offsets, atol=1e-12, rtol=0):
        raise DomainError("zones were computed on different offset grids")
    return ZoneComparison(a.offsets.copy(), b.steer_distance - a.steer_distance, b.steer_ttc - a.steer_ttc)
