"""Initial conditions of an ego vehicle closing in on a slower lead."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from critzone.errors import ScenarioError
from critzone.models import ComfortBounds, ModelKind, VehicleParams
from critzone.propagate import BrakeState, lateral_state

__all__ = ["Scenario", "kmh"]


def kmh(value: float) -> float:
    """Convert km/h to m/s."""
    return value / 3.6


@dataclass(frozen=True)
class Scenario:
    """Ego and lead kinematics at the decision instant (SI units).

    Geometry is expressed relative to the lead:

    ``gap``
        Longitudinal distance from the ego front bumper to the lead's rear.
    ``offset``
        ``y_FR - y_L - y_margin``, the lateral position of the ego's front
        right corner relative to the lead's rear left corner. Negative
        values mean the ego still has to move left.

    The ego reference point starts at ``x = y = 0``.
    """

    v_x: float = kmh(70.0)
    v_L: float = kmh(20.0)
    gap: float = 30.0
    offset: float = -3.7
    psi: float = 0.0
    v_s: float = 0.0
    psi_dot: float = 0.0
    delta: float = 0.0
    a_s: float = 0.0
    a_b: float = 0.0
    mu: float = 1.0
    x_margin: float = 0.0
    y_margin: float = 0.0
    lane_width: float = 3.7
    params: VehicleParams = field(default_factory=VehicleParams)
    comfort: ComfortBounds = field(default_factory=ComfortBounds)

    def __post_init__(self):
        for name in ("v_x", "v_L", "gap", "offset", "psi", "v_s", "psi_dot", "delta", "a_s", "a_b", "mu",
                     "x_margin", "y_margin", "lane_width"):
            if not math.isfinite(getattr(self, name)):
                raise ScenarioError(f"{name} must be finite")
        if not self.v_L >= 0:
            raise ScenarioError(f"lead speed must be nonnegative, got v_L={self.v_L:.6g} m/s")
        if not self.v_x > self.v_L:
            raise ScenarioError(f"ego must be faster than the lead (v_x={self.v_x:.6g} <= v_L={self.v_L:.6g} m/s)")
        if self.x_margin < 0 or self.y_margin < 0:
            raise ScenarioError("safety margins must be nonnegative")
        if not 0 < self.mu <= 1.2:
            raise ScenarioError(f"friction coefficient must lie in (0, 1.2], got {self.mu:.6g}")
        if not self.lane_width > 0:
            raise ScenarioError("lane width must be positive")

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    @property
    def closing_speed(self) -> float:
        return self.v_x - self.v_L

    @property
    def x_L0(self) -> float:
        """Initial longitudinal position of the lead's rear (m)."""
        return self.params.L_f + self.gap

    def initial_state(self, kind: ModelKind | str) -> np.ndarray:
        return lateral_state(kind, 0.0, self.psi, self.v_s, self.psi_dot, self.delta, self.a_s)

    def y_FR0(self, kind: ModelKind | str) -> float:
        """Initial front right corner lateral position in the model's geometry."""
        kind = ModelKind.parse(kind)
        yaw = 0.0 if kind is ModelKind.PMM else self.psi
        return self.params.L_f * yaw - 0.5 * self.params.W

    def y_L(self, kind: ModelKind | str) -> float:
        """Lateral position of the lead's rear left corner (m)."""
        return self.y_FR0(kind) - self.offset - self.y_margin

    def lane_mark(self, kind: ModelKind | str) -> float:
        """Lateral position of the ego lane's right marking (m)."""
        return self.y_L(kind) + self.y_margin - self.lane_width

    def brake_state(self) -> BrakeState:
        return BrakeState(-self.gap, self.closing_speed, self.a_b)
