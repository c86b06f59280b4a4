import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

import oracles
from critzone.braking import (
    accel_phase_time,
    avoid_by_braking,
    brake_boundary_distance,
    jerk_phase_time,
)
from critzone.errors import DomainError, ScenarioError
from critzone.models import ComfortBounds
from critzone.propagate import BrakeState
from critzone.scenario import kmh


# --- phase times ------------------------------------------------------------

def test_jerk_phase_time_from_rest(comfort):
    t = jerk_phase_time(BrakeState(-30.0, kmh(50.0), 0.0), comfort.j_bmin)
    assert t == pytest.approx(1.6667, abs=1e-4)
    x = oracles.brake_piecewise_rk4([-30.0, kmh(50.0), 0.0], [(t, comfort.j_bmin)])
    assert x[1] == pytest.approx(0.0, abs=1e-9)


def test_jerk_phase_time_while_braking(comfort):
    t = jerk_phase_time(BrakeState(-30.0, 10.0, -2.0), comfort.j_bmin)
    ref = brentq(lambda s: oracles.brake_piecewise_rk4([-30.0, 10.0, -2.0], [(s, -10.0)], h=1e-3)[1], 0.1, 5.0,
                 xtol=1e-14)
    assert t == pytest.approx(ref, abs=1e-9)
    assert 10 - 2 * t - 5 * t * t == pytest.approx(0.0, abs=1e-12)


def test_jerk_phase_time_vanishes_with_speed(comfort):
    assert jerk_phase_time(BrakeState(-1.0, 1e-12, 0.0), comfort.j_bmin) < 1e-5
    assert jerk_phase_time(BrakeState(-1.0, 0.0, 0.0), comfort.j_bmin) is None


def test_accel_phase_time(comfort):
    assert accel_phase_time(0.0, comfort) == 0.5
    assert accel_phase_time(comfort.a_bmin, comfort) == 0.0
    assert accel_phase_time(-6.0, comfort) == 0.0


def test_jerk_must_be_negative():
    with pytest.raises(DomainError):
        jerk_phase_time(BrakeState(-1.0, 1.0, 0.0), 0.0)
    with pytest.raises(DomainError):
        ComfortBounds(j_bmin=1.0)


# --- manoeuvre --------------------------------------------------------------

def test_two_phase_stop_from_70_to_20(comfort):
    x0 = BrakeState(-40.0, kmh(70) - kmh(20), 0.0)
    out = avoid_by_braking(x0, comfort)
    assert out.two_phase and out.t_ba == 0.5
    assert out.t_bj == pytest.approx(1.6667, abs=1e-4)
    assert out.t_b == pytest.approx(3.0278, abs=1e-4)
    t_ref, x_ref = oracles.brake_stop(x0, comfort)
    assert out.t_b == pytest.approx(t_ref, abs=1e-9)
    assert out.final_state.dx == pytest.approx(x_ref[0], abs=1e-6)
    assert out.final_state.dv == pytest.approx(0.0, abs=1e-12)
    assert out.avoidable


def test_single_phase_stop(comfort):
    x0 = BrakeState(-10.0, 1.0, 0.0)
    out = avoid_by_braking(x0, comfort)
    assert not out.two_phase and out.t_b == out.t_bj
    t_ref, x_ref = oracles.brake_stop(x0, comfort)
    assert out.t_b == pytest.approx(t_ref, abs=1e-9)
    assert out.final_state.dx == pytest.approx(x_ref[0], abs=1e-6)


def test_harder_initial_braking_is_held(comfort):
    x0 = BrakeState(-40.0, 12.0, -6.0)
    out = avoid_by_braking(x0, comfort)
    assert out.t_ba == 0.0
    assert out.t_b == pytest.approx(2.0)
    assert out.final_state.a == -6.0
    t_ref, x_ref = oracles.brake_stop(x0, comfort)
    assert out.final_state.dx == pytest.approx(x_ref[0], abs=1e-6)


def test_tiny_closing_speed_far_away(comfort):
    out = avoid_by_braking(BrakeState(-100.0, 0.1, 0.0), comfort)
    assert out.avoidable and out.t_b < 0.2


def test_not_closing_in(comfort):
    out = avoid_by_braking(BrakeState(-5.0, -1.0, 0.0), comfort)
    assert not out.braking_needed and out.avoidable and out.t_b == 0.0


def test_collision_when_too_close(comfort):
    out = avoid_by_braking(BrakeState(-5.0, kmh(50), 0.0), comfort)
    assert not out.avoidable and out.final_state.dx > 0


def test_gap_must_respect_margin(comfort):
    with pytest.raises(ScenarioError):
        avoid_by_braking(BrakeState(-1.0, 5.0, 0.0), comfort, x_margin=2.0)
    with pytest.raises(ScenarioError):
        avoid_by_braking(BrakeState(0.5, 5.0, 0.0), comfort)


def test_margin_shifts_verdict(comfort):
    x0 = BrakeState(-30.0, 10.0, 0.0)
    out = avoid_by_braking(x0, comfort)
    slack = -out.final_state.dx
    assert avoid_by_braking(x0, comfort, x_margin=slack - 1e-6).avoidable
    assert not avoid_by_braking(x0, comfort, x_margin=slack + 1e-6).avoidable


@pytest.mark.invariant
@settings(max_examples=1000)
@given(dx=st.floats(-200.0, -0.5), dv=st.floats(0.01, 50.0), a0=st.floats(-9.0, 3.0),
       a_min=st.floats(-9.0, -1.0), j=st.floats(-30.0, -1.0))
def test_final_relative_speed_vanishes(dx, dv, a0, a_min, j):
    out = avoid_by_braking(BrakeState(dx, dv, a0), ComfortBounds(a_bmin=a_min, j_bmin=j))
    assert abs(out.final_state.dv) < 1e-9


@pytest.mark.invariant
@settings(max_examples=60)
@given(dv=st.floats(0.5, 40.0), a0=st.floats(-8.0, 2.0), j=st.floats(-30.0, -2.0))
def test_closed_form_against_rk4(dv, a0, j):
    c = ComfortBounds(j_bmin=j)
    x0 = BrakeState(-300.0, dv, a0)
    out = avoid_by_braking(x0, c)
    _, x_ref = oracles.brake_stop(x0, c)
    assert out.final_state.dx == pytest.approx(x_ref[0], abs=1e-6)


@pytest.mark.invariant
def test_infinite_jerk_limit():
    dv = 15.0
    jerks = -np.logspace(0.5, 6, 25)
    t_b = [avoid_by_braking(BrakeState(-500.0, dv, 0.0), ComfortBounds(j_bmin=j)).t_b for j in jerks]
    assert np.all(np.diff(t_b) < 0)
    assert t_b[-1] == pytest.approx(dv / 5.0, abs=1e-5)


# --- boundary distance ------------------------------------------------------

def test_boundary_distance_is_the_smallest_safe_gap(comfort):
    dv = kmh(70) - kmh(20)
    d = brake_boundary_distance(dv, 0.0, comfort)
    assert d == pytest.approx(22.7103, abs=1e-4)
    assert avoid_by_braking(BrakeState(-(d + 1e-6), dv, 0.0), comfort).avoidable
    assert not avoid_by_braking(BrakeState(-(d - 1e-6), dv, 0.0), comfort).avoidable


def test_boundary_distance_90_to_20_against_rk4(comfort):
    dv = kmh(90) - kmh(20)
    _, x_ref = oracles.brake_stop([0.0, dv, 0.0], comfort)
    assert brake_boundary_distance(dv, 0.0, comfort) == pytest.approx(x_ref[0], abs=1e-6)
    assert brake_boundary_distance(dv, 0.0, comfort) == pytest.approx(42.618, abs=1e-3)


def test_boundary_distance_includes_margin(comfort):
    base = brake_boundary_distance(10.0, 0.0, comfort)
    assert brake_boundary_distance(10.0, 0.0, comfort, x_margin=2.0) == pytest.approx(base + 2.0)
    assert brake_boundary_distance(-1.0, 0.0, comfort, x_margin=2.0) == 2.0
