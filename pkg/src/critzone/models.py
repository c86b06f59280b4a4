"""Lateral vehicle models and the steering limits derived from driver comfort.

Four single-track abstractions are provided, all written as a linear system
whose matrices depend on the longitudinal speed ``v_x``::

    x' = A(v_x) x + B u
    y  = C(v_x) x + D(v_x) u,   y = [y_FR + W/2, a_s, j_s]

State layouts (SI units throughout):

    DM    [y, psi, v_s, psi_dot, delta]   input: steering rate (rad/s)
    SSCM  [y, psi, delta]                 input: steering rate (rad/s)
    KM    [y, psi, delta]                 input: steering rate (rad/s)
    PMM   [y, v_s, a_s]                   input: lateral jerk (m/s^3)
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np

from critzone.errors import DomainError

__all__ = [
    "ComfortBounds",
    "LateralSystem",
    "ModelKind",
    "SteeringLimits",
    "VehicleParams",
    "build_system",
    "friction_angle_limit",
    "friction_threshold",
    "lateral_speed",
    "longitudinal_closed_form",
    "parameter_vector",
    "steady_state_angle",
    "steady_state_rate",
    "steering_limits",
]


@dataclass(frozen=True)
class VehicleParams:
    """Ego vehicle constants. Defaults are the mid-size car used throughout."""

    m: float = 2000.0  # kg
    I_z: float = 3200.0  # kg m^2
    c_f: float = 50000.0  # N/rad
    c_r: float = 50000.0  # N/rad
    l_f: float = 1.226  # m, reference point to front axle
    l_r: float = 1.550  # m, reference point to rear axle
    L_f: float = 1.820  # m, reference point to front bumper
    L: float = 4.27  # m
    W: float = 1.78  # m
    delta_Vmax: float = math.radians(44.30)
    omega_Vmax: float = math.radians(24.61)
    g: float = 9.81

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"vehicle parameter {name} must be positive and finite, got {value!r}")
        if self.l_f + self.l_r > self.L:
            raise DomainError("wheelbase l_f + l_r exceeds vehicle length L")
        if self.L_f > self.L:
            raise DomainError("front overhang L_f exceeds vehicle length L")

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r

    @property
    def understeer_term(self) -> float:
        # m/2 (l_r/c_f - l_f/c_r), shared by the steady-state and friction bounds
        return 0.5 * self.m * (self.l_r / self.c_f - self.l_f / self.c_r)


@dataclass(frozen=True)
class ComfortBounds:
    """Driver comfort thresholds for braking and steering."""

    a_bmin: float = -5.0  # m/s^2
    j_bmin: float = -10.0  # m/s^3
    a_smax: float = 5.0  # m/s^2
    j_smax: float = 5.0  # m/s^3

    def __post_init__(self):
        if not self.a_bmin < 0:
            raise DomainError("a_bmin must be negative")
        if not self.j_bmin < 0:
            raise DomainError("j_bmin must be negative")
        if not self.a_smax > 0:
            raise DomainError("a_smax must be positive")
        if not self.j_smax > 0:
            raise DomainError("j_smax must be positive")


class ModelKind(str, enum.Enum):
    DM = "dm"
    SSCM = "sscm"
    KM = "km"
    PMM = "pmm"

    @property
    def n_states(self) -> int:
        return 5 if self is ModelKind.DM else 3

    @property
    def psi_index(self) -> int | None:
        """Index of the yaw angle in the state, ``None`` for the point mass."""
        return None if self is ModelKind.PMM else 1

    @property
    def saturating_index(self) -> int:
        """Index of the state held at its limit during the second phase.

        Steering angle for the single-track models, lateral acceleration for
        the point mass.
        """
        return 4 if self is ModelKind.DM else 2

    @property
    def has_closed_form(self) -> bool:
        return self is not ModelKind.DM

    @classmethod
    def parse(cls, value: "str | ModelKind") -> "ModelKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown model {value!r}; expected one of dm, sscm, km, pmm") from None


@functools.lru_cache(maxsize=64)
def parameter_vector(params: VehicleParams, kind: ModelKind) -> tuple[float, ...]:
    """Model parameter vector ``p``; cached per (params, kind)."""
    m, I_z, c_f, c_r = params.m, params.I_z, params.c_f, params.c_r
    l_f, l_r, l = params.l_f, params.l_r, params.wheelbase
    if kind is ModelKind.DM:
        return tuple(
            2.0 * v
            for v in (
                (c_f + c_r) / m,
                (l_r * c_r - l_f * c_f) / m,
                c_f / m,
                (l_r * c_r - l_f * c_f) / I_z,
                (l_f**2 * c_f + l_r**2 * c_r) / I_z,
                l_f * c_f / I_z,
                params.L_f / 2.0,
            )
        )
    if kind is ModelKind.SSCM:
        return (
            l_r,
            l,
            m * l_f / (2.0 * c_r * l),
            m / (2.0 * l) * (l_r / c_f - l_f / c_r),
            params.L_f,
        )
    if kind is ModelKind.KM:
        return (l_r / l, 1.0 / l, params.L_f)
    return ()


@dataclass(frozen=True, eq=False)
class LateralSystem:
    """State-space matrices of one lateral model at a fixed speed.

    Instances compare by identity so they can key per-solve caches.
    """

    kind: ModelKind
    v_x: float
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    p: tuple[float, ...]
    params: VehicleParams
    A_se: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.kind.n_states

    @property
    def H_yC(self) -> np.ndarray:
        """First output row, mapping state to ``y_FR + W/2``."""
        return self.C[0]


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def build_system(params: VehicleParams, kind: ModelKind | str, v_x: float) -> LateralSystem:
    """Assemble ``A, B, C, D`` for ``kind`` at longitudinal speed ``v_x``.

    Results are memoised; the matrices are read-only so sharing is safe.
    """
    kind = ModelKind.parse(kind)
    if not (v_x > 0 and math.isfinite(v_x)):
        raise DomainError(f"longitudinal speed must be positive, got {v_x!r}")
    return _build_system(params, kind, float(v_x))


@functools.lru_cache(maxsize=256)
def _build_system(params: VehicleParams, kind: ModelKind, v_x: float) -> LateralSystem:
    p = parameter_vector(params, kind)
    v = float(v_x)

    if kind is ModelKind.DM:
        p1, p2, p3, p4, p5, p6, p7 = p
        A = [
            [0, v, 1, 0, 0],
            [0, 0, 0, 1, 0],
            [0, 0, -p1 / v, p2 / v - v, p3],
            [0, 0, p4 / v, -p5 / v, p6],
            [0, 0, 0, 0, 0],
        ]
        B = [0, 0, 0, 0, 1]
        C = [
            [1, p7, 0, 0, 0],
            [0, 0, -p1 / v, p2 / v, p3],
            [0, 0, (p1**2 + p2 * p4) / v**2, p1 - p2 * (p1 + p5) / v**2, (p2 * p6 - p1 * p3) / v],
        ]
        D = [0, 0, p3]
    elif kind is ModelKind.SSCM:
        p1, p2, p3, p4, p5 = p
        den = p2 + p4 * v**2
        A = [
            [0, v, (p1 - p3 * v**2) / den * v],
            [0, 0, v / den],
            [0, 0, 0],
        ]
        B = [0, 0, 1]
        C = [[1, p5, 0], [0, 0, v**2 / den], [0, 0, 0]]
        D = [0, 0, v**2 / den]
    elif kind is ModelKind.KM:
        p1, p2, p3 = p
        A = [[0, v, p1 * v], [0, 0, p2 * v], [0, 0, 0]]
        B = [0, 0, 1]
        C = [[1, p3, 0], [0, 0, p2 * v**2], [0, 0, 0]]
        D = [0, p1 * v, p2 * v**2]
    else:
        A = [[0, 1, 0], [0, 0, 1], [0, 0, 0]]
        B = [0, 0, 1]
        C = [[1, 0, 0], [0, 0, 1], [0, 0, 0]]
        D = [0, 0, 1]

    A = np.array(A, dtype=float)
    B = np.array(B, dtype=float)
    n = kind.n_states
    A_se = np.zeros((n + 1, n + 1))
    A_se[:n, :n] = A
    A_se[:n, n] = B
    return LateralSystem(
        kind=kind,
        v_x=v,
        A=_readonly(A),
        B=_readonly(B),
        C=_readonly(C),
        D=_readonly(D),
        p=p,
        params=params,
        A_se=_readonly(A_se),
    )


def _check_speed(v_x):
    if not v_x > 0:
        raise DomainError(f"longitudinal speed must be positive, got {v_x!r}")


def _steady_gain(params: VehicleParams, v_x: float, kind: ModelKind) -> float:
    # steering angle per unit lateral acceleration in steady cornering
    _check_speed(v_x)
    if kind is ModelKind.KM:
        return params.wheelbase / v_x**2
    if kind is ModelKind.PMM:
        raise DomainError("the point mass model has no steering angle")
    l = params.wheelbase
    return ((l / v_x) ** 2 + params.understeer_term) / l


def steady_state_angle(params: VehicleParams, a_ss: float, v_x: float, kind: ModelKind | str = ModelKind.DM) -> float:
    """Constant steering angle (rad) giving steady lateral acceleration ``a_ss``.

    The dynamic and steady-state cornering models share one expression; the
    kinematic model ignores tyre slip and uses ``a_ss l / v_x^2``.
    """
    return a_ss * _steady_gain(params, v_x, ModelKind.parse(kind))


def steady_state_rate(params: VehicleParams, j_ss: float, v_x: float, kind: ModelKind | str = ModelKind.DM) -> float:
    """Constant steering rate (rad/s) giving steady lateral jerk ``j_ss``."""
    return j_ss * _steady_gain(params, v_x, ModelKind.parse(kind))


def friction_angle_limit(params: VehicleParams, mu: float, v_x: float) -> float:
    """Largest steady steering angle keeping both axles inside the friction ellipse."""
    if not mu > 0:
        raise DomainError(f"friction coefficient must be positive, got {mu!r}")
    _check_speed(v_x)
    l = params.wheelbase
    return mu * params.g / max(params.l_f, params.l_r) * ((l / v_x) ** 2 + params.understeer_term)


def friction_threshold(params: VehicleParams, a_smax: float) -> float:
    """Friction coefficient below which the friction bound is the tighter one."""
    if not a_smax > 0:
        raise DomainError("a_smax must be positive")
    return a_smax / params.g * max(params.l_f, params.l_r) / params.wheelbase


@dataclass(frozen=True)
class SteeringLimits:
    """Effective saturation values for the two-phase steering manoeuvre.

    For the point mass model ``delta_*`` carry lateral acceleration (m/s^2)
    and ``omega_*`` lateral jerk (m/s^3).
    """

    delta_max: float
    omega_max: float
    delta_ss: float
    omega_ss: float
    delta_max_mu: float


def steering_limits(
    params: VehicleParams,
    comfort: ComfortBounds,
    mu: float,
    v_x: float,
    kind: ModelKind | str = ModelKind.DM,
) -> SteeringLimits:
    """Effective limits: the smallest of the physical, comfort and friction bounds."""
    kind = ModelKind.parse(kind)
    _check_speed(v_x)
    if kind is ModelKind.PMM:
        return SteeringLimits(
            delta_max=comfort.a_smax,
            omega_max=comfort.j_smax,
            delta_ss=comfort.a_smax,
            omega_ss=comfort.j_smax,
            delta_max_mu=math.inf,
        )
    d_ss = steady_state_angle(params, comfort.a_smax, v_x, kind)
    w_ss = steady_state_rate(params, comfort.j_smax, v_x, kind)
    d_mu = friction_angle_limit(params, mu, v_x)
    return SteeringLimits(
        delta_max=min(params.delta_Vmax, d_ss, d_mu),
        omega_max=min(params.omega_Vmax, w_ss),
        delta_ss=d_ss,
        omega_ss=w_ss,
        delta_max_mu=d_mu,
    )


def lateral_speed(system: LateralSystem, states: np.ndarray) -> np.ndarray:
    """Body-frame lateral speed of the reference point for stacked states."""
    states = np.asarray(states, dtype=float)
    kind, v = system.kind, system.v_x
    if kind is ModelKind.DM:
        return states[..., 2]
    if kind is ModelKind.SSCM:
        p1, p2, p3, p4, _ = system.p
        return (p1 - p3 * v**2) / (p2 + p4 * v**2) * v * states[..., 2]
    if kind is ModelKind.KM:
        return system.p[0] * v * states[..., 2]
    return np.zeros(states.shape[:-1])


def longitudinal_closed_form(
    system: LateralSystem,
    x_s0,
    t_s: float,
    t_sa: float,
    limits: SteeringLimits,
    x0: float = 0.0,
) -> float:
    """Longitudinal position after a two-phase manoeuvre, in closed form.

    Integrates ``x' = v_x - v_s psi`` exactly along the SSCM or KM trajectory;
    the point mass reduces to ``x0 + v_x t_s``. ``t_sa >= t_s`` selects the
    single-phase expression.
    """
    kind = system.kind
    if kind is ModelKind.DM:
        raise DomainError("the dynamic model has no closed-form longitudinal integral")
    if t_s < 0 or t_sa < 0:
        raise DomainError("manoeuvre times must be nonnegative")
    v = system.v_x
    if kind is ModelKind.PMM:
        return x0 + v * t_s

    x_s0 = np.asarray(x_s0, dtype=float)
    psi0, d0 = float(x_s0[1]), float(x_s0[2])
    w = limits.omega_max
    single = t_sa >= t_s
    ta = t_s if single else t_sa
    # held angle; equals delta_max unless the start already exceeds it
    d_hold = d0 + w * ta

    if kind is ModelKind.SSCM:
        p1, p2, p3, p4, _ = system.p
        k = p1 - p3 * v**2
        den = p4 * v**2 + p2
        out = x0 + v * t_s - (
            ta * v * (2 * d0 + w * ta) * k * (w * ta**2 * v + 2 * d0 * ta * v + 4 * p4 * psi0 * v**2 + 4 * p2 * psi0)
        ) / (8 * den**2)
        if not single:
            out += (
                d_hold * v * k * (t_sa - t_s)
                * (2 * p2 * psi0 + 2 * p4 * psi0 * v**2 + w * t_sa**2 * v + 2 * d0 * t_sa * v - d_hold * t_sa * v + d_hold * t_s * v)
            ) / (2 * den**2)
        return out

    _, p2, _ = system.p
    l_r, l = system.params.l_r, system.params.wheelbase
    out = x0 + v * t_s - (
        l_r * ta * v * (2 * d0 + w * ta) * (w * p2 * v * ta**2 + 2 * d0 * p2 * v * ta + 4 * psi0)
    ) / (8 * l)
    if not single:
        out += (
            d_hold * l_r * v * (t_sa - t_s)
            * (2 * psi0 + 2 * d0 * p2 * t_sa * v - d_hold * p2 * t_sa * v + d_hold * p2 * t_s * v + w * p2 * t_sa**2 * v)
        ) / (2 * l)
    return out
