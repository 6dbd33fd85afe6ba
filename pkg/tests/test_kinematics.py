import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskplan.kinematics import (
    ControlInput,
    PlannerParams,
    RobotState,
    arc_step,
    brake_control,
    braking_path,
    control_lattice,
    reachable_control_window,
    state_cost,
    step_kinematics,
    wrap_angle,
)


def euler(state, u, dt, h=1e-5):
    """Explicit Euler on the unicycle ODE; the independent reference."""
    x, y, th = state.x, state.y, state.theta
    n = int(round(dt / h))
    for _ in range(n):
        x += u.v_cmd * math.cos(th) * h
        y += u.v_cmd * math.sin(th) * h
        th += u.omega_cmd * h
    return x, y


def test_straight_line_step():
    s = step_kinematics(RobotState(0, 0, 0), ControlInput(1.0, 0.0), 0.5)
    assert (s.x, s.y, s.theta, s.v, s.omega, s.t) == (0.5, 0.0, 0.0, 1.0, 0.0, 0.5)


def test_pure_rotation_step():
    s = step_kinematics(RobotState(0, 0, 0), ControlInput(0.0, 0.5), 1.0)
    assert (s.x, s.y) == (0.0, 0.0)
    assert s.theta == pytest.approx(0.5, abs=1e-15)
    assert (s.v, s.omega, s.t) == (0.0, 0.5, 1.0)


def test_half_circle_matches_closed_form_and_euler():
    s = step_kinematics(RobotState(0, 0, 0), ControlInput(1.0, 1.0), math.pi)
    assert s.x == pytest.approx(math.sin(math.pi), abs=1e-12)
    assert s.y == pytest.approx(1 - math.cos(math.pi), abs=1e-12)
    assert abs(abs(s.theta) - math.pi) < 1e-12
    ex, ey = euler(RobotState(0, 0, 0), ControlInput(1.0, 1.0), math.pi)
    assert math.hypot(s.x - ex, s.y - ey) < 1e-3


def test_dt_must_be_positive():
    with pytest.raises(ValueError):
        step_kinematics(RobotState(0, 0), ControlInput(1, 0), 0.0)


@pytest.mark.parametrize("v,lo,hi", [(0.0, 0.0, 0.25), (1.0, 0.75, 1.0), (0.9, 0.65, 1.0)])
def test_velocity_window(v, lo, hi):
    p = PlannerParams()
    v_lo, v_hi, w_lo, w_hi = reachable_control_window(RobotState(0, 0, 0, v, 0.0), p)
    assert (v_lo, v_hi) == pytest.approx((lo, hi))
    if v == 0.0:
        assert (w_lo, w_hi) == pytest.approx((-0.25, 0.25))


def test_control_lattice_size_and_endpoints():
    vs, ws = control_lattice(0.0, 1.0, -0.5, 0.5, 4, 4)
    assert len(vs) == len(ws) == 25
    assert set(np.round(vs, 12)) == {0.0, 0.25, 0.5, 0.75, 1.0}
    assert ws.min() == -0.5 and ws.max() == 0.5


@pytest.mark.parametrize("x1,x2,goal,w1,w2,expected", [
    (RobotState(0, 0, 0), (1, 0), (2, 0), 1, 1, 0.5),
    (RobotState(0, 0, 0), (0, 1), (0, 2), 1, 1, 0.5 + math.pi / 2),
    (RobotState(0, 0, math.pi), (1, 0), (1, 0), 1, 0.35, 1 + 0.35 * math.pi),
])
def test_state_cost_examples(x1, x2, goal, w1, w2, expected):
    p = PlannerParams(w1=w1, w2=w2)
    assert state_cost(x1, x2, goal, p) == pytest.approx(expected, rel=1e-12)


def test_state_cost_degenerate_cases():
    p = PlannerParams(w1=1, w2=1)
    # at the goal: no position term; on the target: no angle term
    assert state_cost(RobotState(2, 0, 1.0), (3, 0), (2, 0), p) == pytest.approx(1.0)
    assert state_cost(RobotState(1, 1, 0.3), (1, 1), (5, 5), p) == 0.0


def test_brake_reaches_standstill():
    p = PlannerParams()
    s = RobotState(0, 0, 0, 1.0, 0.4)
    u = brake_control(s, p)
    assert u.v_cmd == pytest.approx(0.75) and u.omega_cmd == pytest.approx(0.15)
    xs, ys = braking_path(s, p)
    assert len(xs) == 4  # 1.0 -> 0.75 -> 0.5 -> 0.25 -> 0
    assert len(braking_path(RobotState(0, 0), p)[0]) == 0


finite = st.floats(-50, 50, allow_nan=False)
controls = st.tuples(st.floats(0, 1), st.floats(-0.5, 0.5))


@settings(max_examples=200, deadline=None)
@given(x=finite, y=finite, th=st.floats(-4, 4), u=controls, dt=st.floats(0.01, 3.0))
def test_half_steps_compose(x, y, th, u, dt):
    s0 = RobotState(x, y, th)
    c = ControlInput(*u)
    full = step_kinematics(s0, c, dt)
    half = step_kinematics(step_kinematics(s0, c, dt / 2), c, dt / 2)
    assert abs(full.x - half.x) < 1e-9 and abs(full.y - half.y) < 1e-9
    assert abs(wrap_angle(full.theta - half.theta)) < 1e-9


@settings(max_examples=100, deadline=None)
@given(th=st.floats(-4, 4), v=st.floats(0, 1), dt=st.floats(0.01, 2))
def test_zero_omega_keeps_heading_and_zero_v_keeps_position(th, v, dt):
    s = RobotState(1.0, 2.0, th)
    assert step_kinematics(s, ControlInput(v, 0.0), dt).theta == s.theta
    moved = step_kinematics(s, ControlInput(0.0, 0.3), dt)
    assert (moved.x, moved.y) == (s.x, s.y)


@settings(max_examples=200, deadline=None)
@given(x1=st.tuples(finite, finite, st.floats(-4, 4)), x2=st.tuples(finite, finite),
       goal=st.tuples(finite, finite), angle=st.floats(-4, 4), center=st.tuples(finite, finite))
def test_state_cost_nonnegative_and_rotation_invariant(x1, x2, goal, angle, center):
    p = PlannerParams()
    c, s = math.cos(angle), math.sin(angle)

    def rot(pt):
        dx, dy = pt[0] - center[0], pt[1] - center[1]
        return center[0] + c * dx - s * dy, center[1] + s * dx + c * dy

    base = state_cost(RobotState(*x1), x2, goal, p)
    assert base >= 0
    rx, ry = rot(x1[:2])
    # skip near-degenerate configurations where rounding flips a branch
    if min(math.dist(x1[:2], x2), math.dist(x1[:2], goal)) < 1e-3:
        return
    turned = state_cost(RobotState(rx, ry, x1[2] + angle), rot(x2), rot(goal), p)
    assert turned == pytest.approx(base, rel=1e-6, abs=1e-6)


@settings(max_examples=200, deadline=None)
@given(v=st.floats(-2, 3), w=st.floats(-2, 2))
def test_window_nonempty_and_inside_limits(v, w):
    p = PlannerParams()
    v_lo, v_hi, w_lo, w_hi = reachable_control_window(RobotState(0, 0, 0, v, w), p)
    assert 0 <= v_lo <= v_hi <= p.v_max
    assert -p.omega_max <= w_lo <= w_hi <= p.omega_max


def test_arc_step_vectorized_matches_scalar():
    vs = np.array([0.0, 0.5, 1.0])
    ws = np.array([0.0, 0.3, -1e-12])
    xs, ys, ths = arc_step(1.0, 2.0, 0.4, vs, ws, 0.5)
    for k in range(3):
        s = step_kinematics(RobotState(1.0, 2.0, 0.4), ControlInput(vs[k], ws[k]), 0.5)
        assert (xs[k], ys[k]) == pytest.approx((s.x, s.y), abs=1e-15)


def test_params_validation_and_overrides():
    with pytest.raises(ValueError):
        PlannerParams(h_r=1.5)
    with pytest.raises(ValueError):
        PlannerParams(N=0)
    p = PlannerParams().with_overrides({"N": "7", "retain_goal_tree": "true", "sigma_kappa": "none"})
    assert p.N == 7 and p.retain_goal_tree is True and p.sigma_kappa is None
    with pytest.raises(KeyError):
        PlannerParams().with_overrides({"bogus": "1"})
