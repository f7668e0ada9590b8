import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resilient_platoon.dynamics import (
    G,
    ActuationLimits,
    NonFiniteError,
    PlatoonParams,
    VehicleState,
    relative_state,
    saturate,
    step,
)

HIGHWAY = ActuationLimits.from_g(0.8, 0.5, 27.78)
ROBOT = ActuationLimits(-1.0, 1.0, 1.4)


def test_from_g_matches_gravity_fractions():
    assert HIGHWAY.u_min == pytest.approx(-0.8 * G)
    assert HIGHWAY.u_max == pytest.approx(0.5 * G)
    assert HIGHWAY.u_min == pytest.approx(-7.848)
    assert HIGHWAY.u_max == pytest.approx(4.905)


def test_saturate_examples():
    assert saturate(-100.0, HIGHWAY) == pytest.approx(-7.848)
    assert saturate(0.0, HIGHWAY) == 0.0
    assert saturate(2.0, ROBOT) == 1.0


@given(st.floats(-1e6, 1e6))
def test_saturate_is_projection(u):
    s = saturate(u, ROBOT)
    assert ROBOT.u_min <= s <= ROBOT.u_max
    assert saturate(s, ROBOT) == s
    if ROBOT.u_min <= u <= ROBOT.u_max:
        assert s == u


def test_step_zero_acceleration():
    s = step(VehicleState(0.0, 1.0), 0.0, 0.05, ROBOT)
    assert s.p == pytest.approx(0.05)
    assert s.v == 1.0


def test_step_velocity_floor():
    s = step(VehicleState(0.0, 0.0), -1.0, 0.05, ROBOT)
    assert s == VehicleState(0.0, 0.0)


def test_step_hard_brake_hand_evaluated():
    s = step(VehicleState(0.0, 25.0), -7.848, 0.05, HIGHWAY)
    # velocity first, then position with the new velocity
    assert s.v == pytest.approx(24.6076, abs=1e-9)
    assert s.p == pytest.approx(1.23038, abs=1e-9)


def test_step_velocity_ceiling():
    s = step(VehicleState(0.0, 1.39), 1.0, 0.05, ROBOT)
    assert s.v == 1.4


@given(st.floats(0, 1.4), st.floats(-1, 1), st.floats(1e-3, 0.2))
def test_step_bounds(v, u, dt):
    s = step(VehicleState(3.0, v), u, dt, ROBOT)
    assert 0.0 <= s.v <= ROBOT.v_max
    assert s.p >= 3.0
    assert s.p == pytest.approx(3.0 + s.v * dt)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_step_rejects_non_finite(bad):
    with pytest.raises(NonFiniteError):
        step(VehicleState(0.0, 1.0), bad, 0.05, ROBOT)
    with pytest.raises(NonFiniteError):
        step(VehicleState(bad, 1.0), 0.0, 0.05, ROBOT)


def test_step_rejects_bad_dt():
    with pytest.raises(ValueError):
        step(VehicleState(0.0, 1.0), 0.0, 0.0, ROBOT)


def test_relative_state_examples():
    pred = VehicleState(10.0, 25.0)
    r = relative_state(pred, VehicleState(4.0, 25.0), 6.0)
    assert (r.p_tilde, r.v_tilde) == (0.0, 0.0)
    assert r.gap(6.0) == 6.0
    r = relative_state(pred, VehicleState(6.0, 26.0), 6.0)
    assert (r.p_tilde, r.v_tilde) == (2.0, 1.0)
    r = relative_state(pred, VehicleState(10.0, 25.0), 6.0)
    assert r.p_tilde == 6.0
    assert r.gap(6.0) == 0.0


@pytest.mark.parametrize("kwargs", [
    dict(u_min=1.0, u_max=2.0, v_max=3.0),
    dict(u_min=-1.0, u_max=0.0, v_max=3.0),
    dict(u_min=-1.0, u_max=1.0, v_max=0.0),
    dict(u_min=math.nan, u_max=1.0, v_max=1.0),
])
def test_limits_validation(kwargs):
    with pytest.raises(ValueError):
        ActuationLimits(**kwargs)


def test_platoon_params_validation():
    with pytest.raises(ValueError):
        PlatoonParams(d=0.0, v_des=1.0)
    with pytest.raises(ValueError):
        PlatoonParams(d=1.0, v_des=-1.0)
    with pytest.raises(ValueError):
        PlatoonParams(d=1.0, v_des=1.0, n=0)
    with pytest.raises(ValueError):
        PlatoonParams(d=1.0, v_des=1.5).check_against(ROBOT)
