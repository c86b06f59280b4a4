"""Latest comfortable steering: boundary residual, root finders and verdicts.

The evasive manoeuvre ramps the steering angle at ``omega_max`` until it
reaches ``delta_max`` and holds it afterwards (for the point mass the roles
are played by lateral jerk and acceleration). The steering time ``t_s`` is
the instant the front right corner reaches the lead's left corner plus the
lateral margin.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import expm

from critzone.errors import ConvergenceError, DomainError, SingularDerivativeError
from critzone.models import (
    LateralSystem,
    ModelKind,
    SteeringLimits,
    build_system,
    lateral_speed,
    longitudinal_closed_form,
    steering_limits,
)
from critzone.propagate import TransitionCache, transition
from critzone.scenario import Scenario

__all__ = [
    "Algorithm",
    "BoundaryProblem",
    "RootConfig",
    "RootResult",
    "SteerOutcome",
    "SteeringPlan",
    "Trajectory",
    "avoid_by_steering",
    "avoid_by_steering_backward",
    "avoid_by_steering_forward",
    "avoid_by_steering_simplified",
    "forward_plan",
    "g_s",
    "g_s_ddot",
    "g_s_dot",
    "halley",
    "newton_raphson",
    "longitudinal_travel",
    "sample_states",
    "sample_trajectory",
    "solve_root",
    "steering_time",
]

TANGENT_EPS = 1e-12


class Algorithm(str, enum.Enum):
    BACKWARD = "backward-integrated"
    SIMPLIFIED = "backward-simplified"
    FORWARD = "forward"

    @classmethod
    def parse(cls, value) -> "Algorithm":
        if isinstance(value, cls):
            return value
        aliases = {"2": cls.BACKWARD, "alg2": cls.BACKWARD, "3": cls.SIMPLIFIED, "alg3": cls.SIMPLIFIED,
                   "4": cls.FORWARD, "alg4": cls.FORWARD}
        key = str(value).lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise DomainError(f"unknown algorithm {value!r}; expected 2, 3 or 4") from None

    @property
    def number(self) -> int:
        return {Algorithm.BACKWARD: 2, Algorithm.SIMPLIFIED: 3, Algorithm.FORWARD: 4}[self]


@dataclass(frozen=True)
class RootConfig:
    t0: float = 100.0
    tol: float = 1e-6
    step: float = 1.0
    max_iter: int = 100
    solver: str = "halley"

    def __post_init__(self):
        if not self.t0 > 0:
            raise DomainError("initial guess t0 must be positive")
        if not self.tol > 0:
            raise DomainError("tolerance must be positive")
        if not 0 < self.step <= 1:
            raise DomainError("step must lie in (0, 1]")
        if self.max_iter < 1:
            raise DomainError("max_iter must be at least 1")
        if self.solver not in ("halley", "newton"):
            raise DomainError(f"unknown solver {self.solver!r}; expected 'halley' or 'newton'")


@dataclass(frozen=True)
class RootResult:
    """Converged root. ``clipped`` marks an early stop below ``lower``."""

    root: float
    iterations: int
    tangent: bool = False
    clipped: bool = False

    @property
    def evaluations(self) -> int:
        """Residual evaluations, one more than the number of updates."""
        return self.iterations + 1


class BoundaryProblem:
    """Residual ``g_s(t) = y_FR(t) - y_L - y_margin`` under a constant input.

    :meth:`evaluate` returns the residual and its first two time
    derivatives. The three-state models are polynomial in ``t`` and are
    evaluated with scalar arithmetic; the dynamic model goes through the
    matrix exponential, memoised per time.
    """

    __slots__ = ("system", "x0", "u_const", "y_L", "y_margin", "W", "_pairs", "_H", "_HA", "_HAA", "_Hb", "_HAb",
                 "_c", "evaluate")

    def __init__(self, system: LateralSystem, x0, u_const: float, y_L: float, y_margin: float = 0.0,
                 W: float | None = None):
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (system.n,):
            raise DomainError(f"{system.kind.value} state must have length {system.n}, got shape {x0.shape}")
        self.system = system
        self.x0 = x0
        self.u_const = float(u_const)
        self.y_L = float(y_L)
        self.y_margin = float(y_margin)
        self.W = system.params.W if W is None else float(W)
        self._pairs = TransitionCache(system)
        H = system.C[0]
        self._H = H
        self._HA = H @ system.A
        self._HAA = self._HA @ system.A
        self._Hb = float(H @ system.B) * self.u_const
        self._HAb = float(self._HA @ system.B) * self.u_const
        self._c = 0.5 * self.W + self.y_L + self.y_margin
        kind = system.kind
        if kind is ModelKind.DM:
            self.evaluate = self._evaluate_matrix
        elif kind is ModelKind.PMM:
            self.evaluate = self._point_mass()
        else:
            self.evaluate = self._single_track()

    def state(self, t: float) -> np.ndarray:
        A_t, B_t = self._pairs(t)
        return A_t @ self.x0 + B_t * self.u_const

    def residual(self, x: np.ndarray) -> float:
        return float(self._H @ x) - self._c

    def derivatives(self, x: np.ndarray) -> tuple[float, float, float]:
        """``(g, g', g'')`` at state ``x``."""
        return (
            float(self._H @ x) - self._c,
            float(self._HA @ x) + self._Hb,
            float(self._HAA @ x) + self._HAb,
        )

    def _evaluate_matrix(self, t: float) -> tuple[float, float, float]:
        return self.derivatives(self.state(t))

    def _point_mass(self):
        y0, v0, a0 = (float(v) for v in self.x0)
        j, c = self.u_const, self._c

        def evaluate(t: float) -> tuple[float, float, float]:
            return (
                y0 + t * (v0 + t * (0.5 * a0 + t * j / 6.0)) - c,
                v0 + t * (a0 + 0.5 * j * t),
                a0 + j * t,
            )

        return evaluate

    def _single_track(self):
        # y' = v psi + K delta, psi' = r delta, delta' = u
        A = self.system.A
        v, K, r = float(A[0, 1]), float(A[0, 2]), float(A[1, 2])
        lf = float(self._H[1])
        y0, psi0, d0 = (float(x) for x in self.x0)
        u, c = self.u_const, self._c
        gdd_u = (K + lf * r) * u

        def evaluate(t: float) -> tuple[float, float, float]:
            d = d0 + u * t
            psi = psi0 + r * t * (d0 + 0.5 * u * t)
            y = y0 + t * (v * psi0 + K * d0 + t * (0.5 * (v * r * d0 + K * u) + t * v * r * u / 6.0))
            return (
                y + lf * psi - c,
                v * psi + (K + lf * r) * d,
                v * r * d + gdd_u,
            )

        return evaluate


def g_s(problem: BoundaryProblem, t: float) -> float:
    return problem.evaluate(t)[0]


def g_s_dot(problem: BoundaryProblem, t: float) -> float:
    return problem.evaluate(t)[1]


def g_s_ddot(problem: BoundaryProblem, t: float) -> float:
    return problem.evaluate(t)[2]


def _iterate(problem: BoundaryProblem, config: RootConfig, halley_step: bool, lower: float | None) -> RootResult:
    t = float(config.t0)
    for k in range(config.max_iter + 1):
        g, gd, gdd = problem.evaluate(t)
        if abs(g) < config.tol:
            return RootResult(t, k, tangent=abs(gd) < TANGENT_EPS)
        if k == config.max_iter:
            break
        if gd == 0.0:
            raise SingularDerivativeError(f"residual derivative vanished at t={t:.6g} s", last=t, iterations=k)
        if halley_step:
            den = gd - g * gdd / (2.0 * gd)
            if den == 0.0:
                raise SingularDerivativeError(f"Halley denominator vanished at t={t:.6g} s", last=t, iterations=k)
            t = t - config.step * g / den
        else:
            t = t - config.step * g / gd
        if not math.isfinite(t):
            raise ConvergenceError("iterate diverged", last=t, iterations=k + 1)
        if lower is not None and t < lower:
            return RootResult(t, k + 1, clipped=True)
    raise ConvergenceError(
        f"no convergence within {config.max_iter} iterations (|g|={abs(g):.3g} m)", last=t, iterations=config.max_iter
    )


def newton_raphson(problem: BoundaryProblem, config: RootConfig = RootConfig(), lower: float | None = None) -> RootResult:
    """Newton iteration started to the right of the largest root.

    With ``lower`` set, the iteration stops as soon as an iterate falls
    below it; right-started iterates decrease monotonically, so no root lies
    above ``lower`` in that case.
    """
    return _iterate(problem, config, False, lower)


def halley(problem: BoundaryProblem, config: RootConfig = RootConfig(), lower: float | None = None) -> RootResult:
    """Halley iteration; same contract as :func:`newton_raphson`."""
    return _iterate(problem, config, True, lower)


def solve_root(problem: BoundaryProblem, config: RootConfig = RootConfig(), lower: float | None = None) -> RootResult:
    return _iterate(problem, config, config.solver == "halley", lower)


@dataclass(frozen=True)
class SteeringPlan:
    """Timing of the two-phase manoeuvre and the states at its breakpoints."""

    system: LateralSystem
    limits: SteeringLimits
    x0: np.ndarray
    u: float
    t_s: float
    t_sj: float
    t_sa: float
    x_sa: np.ndarray
    final_state: np.ndarray
    iterations: int
    no_risk: bool = False
    tangent: bool = False

    @property
    def two_phase(self) -> bool:
        return self.t_sa < self.t_s

    def state_at(self, t: float) -> np.ndarray:
        """State along the manoeuvre at ``0 <= t``."""
        if t <= self.t_sa:
            A_t, B_t = transition(self.system, t)
            return A_t @ self.x0 + B_t * self.u
        A_t, _ = transition(self.system, t - self.t_sa)
        return A_t @ self.x_sa


def _ramp_time(system: LateralSystem, x0: np.ndarray, limits: SteeringLimits) -> float:
    # time to reach the saturation value; zero if already beyond it
    s0 = x0[system.kind.saturating_index]
    return max((limits.delta_max - s0) / limits.omega_max, 0.0)


def steering_time(
    system: LateralSystem,
    x0,
    limits: SteeringLimits,
    y_L: float,
    y_margin: float = 0.0,
    config: RootConfig = RootConfig(),
) -> SteeringPlan:
    """Solve for the latest steering time of the two-phase manoeuvre."""
    x0 = np.asarray(x0, dtype=float)
    u = limits.omega_max
    t_sa = _ramp_time(system, x0, limits)
    first = BoundaryProblem(system, x0, u, y_L, y_margin)
    r1 = solve_root(first, config, lower=0.0)
    t_sj = r1.root
    x_sa = first.state(t_sa)
    if r1.clipped or t_sj <= 0.0:
        return SteeringPlan(system, limits, x0, u, 0.0, t_sj, t_sa, x_sa, x0.copy(), r1.iterations, no_risk=True)
    if t_sa >= t_sj:
        return SteeringPlan(system, limits, x0, u, t_sj, t_sj, t_sa, x_sa, first.state(t_sj), r1.iterations,
                            tangent=r1.tangent)
    second = BoundaryProblem(system, x_sa, 0.0, y_L, y_margin)
    r2 = solve_root(second, config, lower=0.0)
    rest = 0.0 if r2.clipped else max(r2.root, 0.0)
    final = second.state(rest)
    return SteeringPlan(system, limits, x0, u, t_sa + rest, t_sj, t_sa, x_sa, final,
                        r1.iterations + r2.iterations, tangent=r2.tangent and not r2.clipped)


@dataclass(frozen=True)
class Trajectory:
    """Manoeuvre sampled on a time grid; ``x`` is longitudinal travel from the start."""

    t: np.ndarray
    states: np.ndarray
    x: np.ndarray
    kind: ModelKind

    @property
    def y(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def psi(self) -> np.ndarray:
        i = self.kind.psi_index
        return np.zeros(len(self.t)) if i is None else self.states[:, i]


def _phase_samples(system: LateralSystem, z0: np.ndarray, duration: float, dt: float, E_dt: np.ndarray):
    # augmented states z = [x; u] at k*dt for k*dt < duration, plus the end point
    n_full = int(math.floor(duration / dt + 1e-9))
    if n_full * dt >= duration - 1e-12:
        n_full -= 1
    n_full = max(n_full, 0)
    zs = np.empty((n_full + 2, z0.size))
    zs[0] = z0
    for k in range(n_full):
        zs[k + 1] = E_dt @ zs[k]
    E_end = expm(system.A_se * duration)
    zs[-1] = E_end @ z0
    ts = np.append(np.arange(n_full + 1) * dt, duration)
    return ts, zs


def sample_states(plan: SteeringPlan, dt: float = 0.01, horizon: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Times and lateral states of the manoeuvre on ``[0, horizon]``.

    Both phases are stepped with the exact one-step map of the augmented
    system at spacing ``dt``; ``t_sa`` and the horizon are always nodes.
    """
    if not dt > 0:
        raise DomainError("sampling interval must be positive")
    system = plan.system
    horizon = plan.t_s if horizon is None else float(horizon)
    n = system.n
    E_dt = expm(system.A_se * dt)
    z0 = np.append(plan.x0, plan.u)
    t1 = min(plan.t_sa, horizon)
    ts, zs = _phase_samples(system, z0, t1, dt, E_dt) if t1 > 0 else (np.zeros(1), z0[None, :])
    if horizon > t1:
        z_sa = np.append(plan.x_sa if t1 == plan.t_sa else zs[-1, :n], 0.0)
        ts2, zs2 = _phase_samples(system, z_sa, horizon - t1, dt, E_dt)
        ts = np.concatenate([ts, t1 + ts2[1:]])
        zs = np.vstack([zs, zs2[1:]])
    return ts, zs[:, :n]


def longitudinal_travel(system: LateralSystem, ts: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Cumulative trapezoidal integral of ``v_x - v_s psi`` over sampled states."""
    i = system.kind.psi_index
    psi = np.zeros(len(ts)) if i is None else states[:, i]
    speed = system.v_x - lateral_speed(system, states) * psi
    return cumulative_trapezoid(speed, ts, initial=0.0)


def sample_trajectory(plan: SteeringPlan, dt: float = 0.01, horizon: float | None = None) -> Trajectory:
    """Sampled manoeuvre with the longitudinal travel of the reference point."""
    ts, states = sample_states(plan, dt, horizon)
    return Trajectory(ts, states, longitudinal_travel(plan.system, ts, states), plan.system.kind)


@dataclass(frozen=True)
class SteerOutcome:
    """Verdict of a steering check.

    ``required_gap`` is the smallest bumper-to-rear gap from which steering
    now still clears the lead, ``dx_s`` the signed longitudinal distance from
    the lead's rear to the ego's front right corner at ``t_s`` (negative when
    the ego is still behind).
    """

    t_s: float
    t_sj: float
    t_sa: float
    final_state: np.ndarray
    dx_s: float
    required_gap: float
    avoidable: bool
    iterations: int
    algorithm: Algorithm
    kind: ModelKind
    no_risk: bool = False
    tangent: bool = False
    plan: SteeringPlan | None = field(default=None, repr=False, compare=False)

    @property
    def final_yaw(self) -> float:
        i = self.kind.psi_index
        return 0.0 if i is None else float(self.final_state[i])


def _setup(scenario: Scenario, model):
    kind = ModelKind.parse(model)
    system = build_system(scenario.params, kind, scenario.v_x)
    limits = steering_limits(scenario.params, scenario.comfort, scenario.mu, scenario.v_x, kind)
    return system, limits, scenario.initial_state(kind), scenario.y_L(kind)


def _no_risk(scenario: Scenario, plan: SteeringPlan, algorithm: Algorithm) -> SteerOutcome:
    return SteerOutcome(
        t_s=0.0, t_sj=plan.t_sj, t_sa=plan.t_sa, final_state=plan.x0.copy(), dx_s=-scenario.gap,
        required_gap=scenario.x_margin, avoidable=True, iterations=plan.iterations, algorithm=algorithm,
        kind=plan.system.kind, no_risk=True, plan=plan,
    )


def _finish(scenario: Scenario, plan: SteeringPlan, travel: float, corner_shift: float, algorithm: Algorithm):
    # corner_shift: forward displacement of the front right corner due to yaw
    closed = travel + corner_shift - scenario.v_L * plan.t_s
    dx_s = closed - scenario.gap
    return SteerOutcome(
        t_s=plan.t_s, t_sj=plan.t_sj, t_sa=plan.t_sa, final_state=plan.final_state, dx_s=dx_s,
        required_gap=closed + scenario.x_margin, avoidable=-dx_s >= scenario.x_margin,
        iterations=plan.iterations, algorithm=algorithm, kind=plan.system.kind, tangent=plan.tangent, plan=plan,
    )


def avoid_by_steering_backward(scenario: Scenario, model="dm", config: RootConfig = RootConfig(),
                               dt: float = 0.01) -> SteerOutcome:
    """Solve for ``t_s`` and integrate the longitudinal travel along the manoeuvre.

    The dynamic model integrates numerically with spacing ``dt``; the other
    models use their exact closed-form integral.
    """
    system, limits, x0, y_L = _setup(scenario, model)
    plan = steering_time(system, x0, limits, y_L, scenario.y_margin, config)
    if plan.no_risk:
        return _no_risk(scenario, plan, Algorithm.BACKWARD)
    if system.kind is ModelKind.DM:
        travel = float(sample_trajectory(plan, dt).x[-1])
    else:
        travel = longitudinal_closed_form(system, x0, plan.t_s, plan.t_sa, limits)
    i = system.kind.psi_index
    psi_end = 0.0 if i is None else float(plan.final_state[i])
    return _finish(scenario, plan, travel, 0.5 * scenario.params.W * psi_end, Algorithm.BACKWARD)


def avoid_by_steering_simplified(scenario: Scenario, model="dm", config: RootConfig = RootConfig()) -> SteerOutcome:
    """As the backward check but with straight-line travel ``v_x t_s``."""
    system, limits, x0, y_L = _setup(scenario, model)
    plan = steering_time(system, x0, limits, y_L, scenario.y_margin, config)
    if plan.no_risk:
        return _no_risk(scenario, plan, Algorithm.SIMPLIFIED)
    return _finish(scenario, plan, scenario.v_x * plan.t_s, 0.0, Algorithm.SIMPLIFIED)


def forward_plan(system: LateralSystem, x0, limits: SteeringLimits, t_s: float) -> SteeringPlan:
    """Two-phase manoeuvre propagated to a prescribed duration ``t_s``."""
    x0 = np.asarray(x0, dtype=float)
    u = limits.omega_max
    t_sa = _ramp_time(system, x0, limits)
    A_a, B_a = transition(system, min(t_sa, t_s))
    x_a = A_a @ x0 + B_a * u
    if t_s > t_sa:
        A_t, _ = transition(system, t_s - t_sa)
        x_end = A_t @ x_a
    else:
        # the ramp is cut short; x_a is the end state, not the breakpoint
        x_end = x_a
    return SteeringPlan(system, limits, x0, u, t_s, math.nan, t_sa, x_a, x_end, 0)


def avoid_by_steering_forward(scenario: Scenario, model="dm") -> SteerOutcome:
    """Propagate to the instant the ego would reach the lead and check clearance.

    No root finding: the manoeuvre time follows from the constant closing
    speed, and the verdict is whether the front right corner has cleared the
    lead's left corner by then.
    """
    system, limits, x0, y_L = _setup(scenario, model)
    t_s = (scenario.gap - scenario.x_margin) / scenario.closing_speed
    if t_s < 0:
        raise DomainError("gap is already below the longitudinal margin")
    plan = forward_plan(system, x0, limits, t_s)
    clearance = float(system.C[0] @ plan.final_state) - 0.5 * scenario.params.W - y_L - scenario.y_margin
    return SteerOutcome(
        t_s=t_s, t_sj=math.nan, t_sa=plan.t_sa, final_state=plan.final_state, dx_s=-scenario.x_margin,
        required_gap=math.nan, avoidable=clearance >= 0.0, iterations=0, algorithm=Algorithm.FORWARD,
        kind=system.kind, plan=plan,
    )


def avoid_by_steering(scenario: Scenario, model="dm", algorithm=Algorithm.BACKWARD,
                      config: RootConfig = RootConfig(), dt: float = 0.01) -> SteerOutcome:
    algorithm = Algorithm.parse(algorithm)
    if algorithm is Algorithm.BACKWARD:
        return avoid_by_steering_backward(scenario, model, config, dt)
    if algorithm is Algorithm.SIMPLIFIED:
        return avoid_by_steering_simplified(scenario, model, config)
    return avoid_by_steering_forward(scenario, model)
