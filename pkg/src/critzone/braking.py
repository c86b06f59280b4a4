"""Latest comfortable braking: ramp deceleration at ``j_bmin``, then hold ``a_bmin``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from critzone.errors import DomainError, ScenarioError
from critzone.models import ComfortBounds
from critzone.propagate import BrakeState, brake_transition

__all__ = [
    "BrakeOutcome",
    "accel_phase_time",
    "avoid_by_braking",
    "brake_boundary_distance",
    "jerk_phase_time",
]


@dataclass(frozen=True)
class BrakeOutcome:
    """Result of the braking check.

    When ``braking_needed`` is false the ego is not closing in, every time is
    zero and the outcome is trivially avoidable.
    """

    t_b: float
    t_bj: float
    t_ba: float
    final_state: BrakeState
    avoidable: bool
    braking_needed: bool = True
    closed_distance: float = 0.0  # relative distance closed during braking (m)

    @property
    def two_phase(self) -> bool:
        return self.braking_needed and self.t_ba < self.t_bj


def jerk_phase_time(x0: BrakeState, j_bmin: float) -> float | None:
    """Time at which a pure jerk ramp brings the relative speed to zero.

    Returns ``None`` when the ego is not faster than the lead.
    """
    if not j_bmin < 0:
        raise DomainError("j_bmin must be negative")
    a0, dv = float(x0.a), float(x0.dv)
    if dv <= 0:
        return None
    # dv + a0 t + j t^2/2 = 0; the discriminant exceeds a0^2 because dv > 0
    disc = a0 * a0 - 2.0 * j_bmin * dv
    return (-a0 - math.sqrt(disc)) / j_bmin


def accel_phase_time(a_b0: float, comfort: ComfortBounds) -> float:
    """Time for the jerk ramp to reach ``a_bmin``; zero if already there."""
    return max((comfort.a_bmin - a_b0) / comfort.j_bmin, 0.0)


def _propagate(x: np.ndarray, u: float, t: float) -> np.ndarray:
    A_t, B_t = brake_transition(t)
    return A_t @ x + B_t * u


def avoid_by_braking(x0: BrakeState, comfort: ComfortBounds, x_margin: float = 0.0) -> BrakeOutcome:
    """Decide whether comfortable braking started now avoids the lead.

    ``x0.dx`` is the gap from the lead's rear to the ego's front, negative
    while the ego is behind. If the ego already brakes harder than
    ``a_bmin`` that deceleration is held rather than relaxed.
    """
    x0 = BrakeState(*map(float, x0))
    if x_margin < 0:
        raise ScenarioError("x_margin must be nonnegative")
    if x0.dx > -x_margin:
        raise ScenarioError(f"initial gap dx={x0.dx:.6g} m violates dx <= -x_margin ({-x_margin:.6g} m)")

    t_bj = jerk_phase_time(x0, comfort.j_bmin)
    if t_bj is None:
        return BrakeOutcome(0.0, 0.0, 0.0, x0, True, braking_needed=False)

    x = x0.as_array()
    if x0.a <= comfort.a_bmin:
        # constant deceleration from the start
        t_ba = 0.0
        t_b = -x0.dv / x0.a
        xf = _propagate(x, 0.0, t_b)
    else:
        t_ba = accel_phase_time(x0.a, comfort)
        if t_ba >= t_bj:
            t_b = t_bj
            xf = _propagate(x, comfort.j_bmin, t_b)
        else:
            xa = _propagate(x, comfort.j_bmin, t_ba)
            t_b = float(t_ba - xa[1] / xa[2])
            xf = _propagate(xa, 0.0, t_b - t_ba)
    final = BrakeState(float(xf[0]), float(xf[1]), float(xf[2]))
    return BrakeOutcome(t_b, t_bj, t_ba, final, -final.dx >= x_margin, closed_distance=final.dx - x0.dx)


def brake_boundary_distance(dv0: float, a_b0: float, comfort: ComfortBounds, x_margin: float = 0.0) -> float:
    """Smallest initial gap (m) from which comfortable braking still avoids the lead."""
    if dv0 <= 0:
        return x_margin
    probe = avoid_by_braking(BrakeState(-x_margin, dv0, a_b0), comfort, x_margin)
    return x_margin + probe.closed_distance
