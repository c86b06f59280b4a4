"""Exact propagation of the lateral and longitudinal linear systems.

With a piecewise-constant input ``u`` the state at time ``t`` is
``A_t x0 + B_t u`` where ``[A_t B_t; 0 1] = expm(A_se t)`` and ``A_se`` is
the system augmented with the input as an extra constant state.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm, null_space, orth

from critzone.errors import DomainError
from critzone.models import LateralSystem, ModelKind

__all__ = [
    "BrakeState",
    "TransitionCache",
    "TransitionPair",
    "brake_transition",
    "closed_form_transition",
    "dm_eigenvalues",
    "jordan_crosscheck",
    "lateral_state",
    "output",
    "propagate",
    "steer_transition",
    "transition",
    "transition_signed",
]


class TransitionPair(NamedTuple):
    A_t: np.ndarray
    B_t: np.ndarray


class BrakeState(NamedTuple):
    """Relative gap ``dx`` (m), relative speed ``dv`` (m/s), ego acceleration ``a`` (m/s^2)."""

    dx: float
    dv: float
    a: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


def lateral_state(kind: ModelKind | str, y=0.0, psi=0.0, v_s=0.0, psi_dot=0.0, delta=0.0, a_s=0.0) -> np.ndarray:
    """Pack named quantities into the state layout of ``kind``.

    Quantities the model does not carry are silently dropped, which is how
    the reduced models ignore, say, an initial yaw rate.
    """
    kind = ModelKind.parse(kind)
    if kind is ModelKind.DM:
        return np.array([y, psi, v_s, psi_dot, delta], dtype=float)
    if kind is ModelKind.PMM:
        return np.array([y, v_s, a_s], dtype=float)
    return np.array([y, psi, delta], dtype=float)


def _check_time(t):
    if not t >= 0:
        raise DomainError(f"time must be nonnegative, got {t!r}")


def brake_transition(t: float) -> TransitionPair:
    """Transition pair of the triple integrator driven by jerk."""
    _check_time(t)
    A = np.array([[1.0, t, 0.5 * t * t], [0.0, 1.0, t], [0.0, 0.0, 1.0]])
    B = np.array([t**3 / 6.0, 0.5 * t * t, t])
    return TransitionPair(A, B)


def steer_transition(system: LateralSystem, t: float) -> TransitionPair:
    """Transition pair from the matrix exponential of the augmented system."""
    _check_time(t)
    n = system.n
    E = expm(system.A_se * t)
    return TransitionPair(E[:n, :n], E[:n, n])


def closed_form_transition(system: LateralSystem, t: float) -> TransitionPair:
    """Polynomial transition pair for the three-state models.

    ``A`` is nilpotent for SSCM, KM and PMM, so the exponential series
    terminates after the quadratic term.
    """
    _check_time(t)
    if system.kind is ModelKind.DM:
        raise DomainError("the dynamic model has no polynomial transition")
    return _polynomial_pair(system, t)


def _polynomial_pair(system: LateralSystem, t: float) -> TransitionPair:
    kind, v = system.kind, system.v_x
    if kind is ModelKind.SSCM:
        p1, p2, p3, p4, _ = system.p
        den = p2 + p4 * v * v
        k = p1 - p3 * v * v
        a13 = (v * v * t * t + 2.0 * v * t * k) / (2.0 * den)
        a23 = v * t / den
        b1 = (v * v * t**3 + 3.0 * v * t * t * k) / (6.0 * den)
        b2 = v * t * t / (2.0 * den)
        A = np.array([[1.0, v * t, a13], [0.0, 1.0, a23], [0.0, 0.0, 1.0]])
        return TransitionPair(A, np.array([b1, b2, t]))
    if kind is ModelKind.KM:
        p1, p2, _ = system.p
        A = np.array(
            [
                [1.0, v * t, v * (p1 * t + 0.5 * p2 * v * t * t)],
                [0.0, 1.0, p2 * v * t],
                [0.0, 0.0, 1.0],
            ]
        )
        B = np.array([p2 * v * v * t**3 / 6.0 + 0.5 * p1 * v * t * t, 0.5 * p2 * v * t * t, t])
        return TransitionPair(A, B)
    A = np.array([[1.0, t, 0.5 * t * t], [0.0, 1.0, t], [0.0, 0.0, 1.0]])
    return TransitionPair(A, np.array([t**3 / 6.0, 0.5 * t * t, t]))


def transition(system: LateralSystem, t: float) -> TransitionPair:
    """Fastest exact transition pair for ``system``."""
    _check_time(t)
    return transition_signed(system, t)


def transition_signed(system: LateralSystem, t: float) -> TransitionPair:
    """As :func:`transition` but also defined for negative ``t``.

    Root finders may overshoot below zero; the linear flow is well defined
    backwards in time.
    """
    if system.kind.has_closed_form:
        return _polynomial_pair(system, t)
    n = system.n
    E = expm(system.A_se * t)
    return TransitionPair(E[:n, :n], E[:n, n])


class TransitionCache:
    """Per-solve memo of transition pairs keyed by time (sign unchecked).

    Not thread-safe by design: create one per solve.
    """

    __slots__ = ("system", "_memo", "hits", "misses")

    def __init__(self, system: LateralSystem):
        self.system = system
        self._memo: dict[float, TransitionPair] = {}
        self.hits = 0
        self.misses = 0

    def __call__(self, t: float) -> TransitionPair:
        t = float(t)
        pair = self._memo.get(t)
        if pair is None:
            self.misses += 1
            pair = transition_signed(self.system, t)
            self._memo[t] = pair
        else:
            self.hits += 1
        return pair


def _state(system: LateralSystem, x0) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (system.n,):
        raise DomainError(f"{system.kind.value} state must have length {system.n}, got shape {x0.shape}")
    return x0


def propagate(system: LateralSystem, x0, u_const: float, t: float) -> np.ndarray:
    """State after holding input ``u_const`` for ``t`` seconds."""
    x0 = _state(system, x0)
    A_t, B_t = transition(system, t)
    return A_t @ x0 + B_t * u_const


def output(system: LateralSystem, x, u: float = 0.0) -> np.ndarray:
    """Outputs ``[y_FR + W/2, a_s, j_s]``."""
    x = _state(system, x)
    return system.C @ x + system.D * u


def dm_eigenvalues(system: LateralSystem) -> tuple[complex, complex]:
    """The nonzero eigenvalue pair of the dynamic model."""
    if system.kind is not ModelKind.DM:
        raise DomainError("eigenvalue pair is defined for the dynamic model only")
    p1, p2, _, p4, p5, _, _ = system.p
    v = system.v_x
    h = np.sqrt(complex((p1 - p5) ** 2 + 4.0 * p4 * (p2 - v * v)))
    return (-(p1 + p5 + h) / (2 * v), -(p1 + p5 - h) / (2 * v))


def _nilpotent_chains(N: np.ndarray) -> tuple[list[np.ndarray], list[int]]:
    """Jordan chains of a nilpotent matrix, longest first, each ordered bottom-up."""
    m = N.shape[0]
    scale = max(np.linalg.norm(N, 2), 1.0)
    kernels = [np.zeros((m, 0))]
    k = 1
    while kernels[-1].shape[1] < m:
        # absolute threshold: a relative one never sees the zero power N^m = 0
        _, sv, vh = np.linalg.svd(np.linalg.matrix_power(N, k))
        rank = int(np.sum(sv > 1e-10 * scale**k))
        kernels.append(vh[rank:].conj().T)
        k += 1
        if k > m + 1:
            raise np.linalg.LinAlgError("generalized kernel did not stabilise")
    cols: list[np.ndarray] = []
    sizes: list[int] = []
    heads: list[tuple[np.ndarray, int]] = []
    for level in range(len(kernels) - 1, 0, -1):
        top, below = kernels[level], kernels[level - 1]
        # already spanned at this level: the lower kernel plus images of longer chains
        span = [below[:, j] for j in range(below.shape[1])]
        span += [np.linalg.matrix_power(N, h - level) @ v for v, h in heads]
        rest = top
        if span:
            S = orth(np.column_stack(span))
            rest = top - S @ (S.T @ top)
        # new heads from the part of the kernel orthogonal to the span, which
        # keeps the chains as well separated as possible
        u, sv, _ = np.linalg.svd(rest, full_matrices=False)
        for cand in u[:, sv > 1e-8].T:
            heads.append((cand, level))
            cols.extend(np.linalg.matrix_power(N, level - 1 - i) @ cand for i in range(level))
            sizes.append(level)
    return cols, sizes


def _jordan_basis(A: np.ndarray, lam_pair) -> tuple[np.ndarray, list[tuple[complex, int]]]:
    """Jordan basis for ``A`` with a (possibly defective) zero eigenvalue.

    Returns ``P`` and the block list ``(eigenvalue, size)`` in column order.
    """
    n = A.shape[0]
    eye = np.eye(n)
    cols: list[np.ndarray] = []
    blocks: list[tuple[complex, int]] = []
    for lam in lam_pair:
        ns = null_space(A - lam * eye, rcond=1e-10)
        if ns.shape[1] < 1:
            raise np.linalg.LinAlgError("missing eigenvector")
        cols.append(ns[:, 0])
        blocks.append((complex(lam), 1))
    # (A - l1)(A - l2) annihilates the pair and is invertible on the zero
    # generalized eigenspace, so its range is exactly that subspace
    l1, l2 = lam_pair
    Q = ((A - l1 * eye) @ (A - l2 * eye)).real
    K = orth(Q, rcond=1e-10)
    if K.shape[1] != n - 2:
        raise np.linalg.LinAlgError("zero eigenspace has the wrong dimension")
    chain_cols, sizes = _nilpotent_chains(K.T @ A @ K)
    cols.extend(K @ c for c in chain_cols)
    blocks.extend((0j, s) for s in sizes)
    P = np.column_stack(cols).astype(complex)
    return P, blocks


def _expm_jordan(blocks, t) -> np.ndarray:
    size = sum(s for _, s in blocks)
    E = np.zeros((size, size), dtype=complex)
    i = 0
    for lam, s in blocks:
        e = np.exp(lam * t)
        for r in range(s):
            for c in range(r, s):
                E[i + r, i + c] = e * t ** (c - r) / math.factorial(c - r)
        i += s
    return E


def jordan_crosscheck(system: LateralSystem, t: float, cond_limit: float = 1e12) -> float:
    """Max deviation between ``expm(A_se t)`` and ``P exp(J t) P^-1``.

    Returns ``inf`` when a usable Jordan basis cannot be formed.
    """
    if system.kind is not ModelKind.DM:
        raise DomainError("the Jordan cross-check targets the dynamic model")
    _check_time(t)
    A = np.asarray(system.A_se)
    direct = expm(A * t)
    try:
        P, blocks = _jordan_basis(A, dm_eigenvalues(system))
        if P.shape != A.shape or np.linalg.cond(P) > cond_limit:
            return math.inf
        via = P @ _expm_jordan(blocks, t) @ np.linalg.inv(P)
    except np.linalg.LinAlgError:
        return math.inf
    if not np.all(np.isfinite(via)):
        return math.inf
    return float(np.max(np.abs(via - direct)))
