"""Unicycle robot state, exact arc integration and the two-state steering cost."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

TWO_PI = 2.0 * math.pi
STRAIGHT_EPS = 1e-9


def wrap_angle(theta):
    """Normalize an angle (scalar or array) into (-pi, pi]."""
    if isinstance(theta, np.ndarray):
        out = np.remainder(theta + math.pi, TWO_PI) - math.pi
        out = np.where(out <= -math.pi, out + TWO_PI, out)
        # angles already in range pass through bit-for-bit
        return np.where((theta > -math.pi) & (theta <= math.pi), theta, out)
    out = math.remainder(theta, TWO_PI)
    if out <= -math.pi:
        out += TWO_PI
    return out


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    theta: float = 0.0
    v: float = 0.0
    omega: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class ControlInput:
    v_cmd: float
    omega_cmd: float


@dataclass
class PlannerParams:
    """Robot limits and planner tuning.

    Velocity/acceleration limits default to the simulated robot of the
    benchmark (1 m/s, 0.5 m/s^2, 0.5 rad/s, 0.5 rad/s^2). ``sigma_kappa``
    left as ``None`` resolves to 2% of the map width at planner construction.
    """

    v_max: float = 1.0
    a_max: float = 0.5
    omega_max: float = 0.5
    alpha_max: float = 0.5
    dt: float = 0.5
    N: int = 10
    delta_nv: int = 4
    delta_nw: int = 4
    w1: float = 1.0
    w2: float = 0.35
    beta: float = 2.0
    lam: float = 3.0
    meet_radius: float = 4.5
    h_r: float = 0.7
    sigma_kappa: float | None = None
    goal_radius: float = 1.0
    iterations_per_cycle: int = 200
    risk_cap: float = 0.8
    retain_goal_tree: bool = False
    # heuristic samples drawn per rooted/sub-tree meet; None means one per path node
    heuristic_burst: int | None = None
    sigma0: float = 0.3
    sigma_growth: float = 0.15

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("v_max", "a_max", "omega_max", "alpha_max", "dt", "lam",
                     "meet_radius", "goal_radius", "sigma0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.sigma_kappa is not None and not self.sigma_kappa > 0:
            raise ValueError("sigma_kappa must be positive")
        if not 0.0 <= self.h_r <= 1.0:
            raise ValueError(f"h_r must lie in [0, 1], got {self.h_r}")
        if self.delta_nv < 1 or self.delta_nw < 1:
            raise ValueError("control discretization counts must be >= 1")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.iterations_per_cycle < 1:
            raise ValueError("iterations_per_cycle must be >= 1")
        if not 0.0 < self.risk_cap <= 1.0:
            raise ValueError("risk_cap must lie in (0, 1]")
        if self.w1 < 0 or self.w2 < 0 or self.beta < 0 or self.sigma_growth < 0:
            raise ValueError("weights must be non-negative")
        if self.heuristic_burst is not None and self.heuristic_burst < 1:
            raise ValueError("heuristic_burst must be >= 1")

    def with_overrides(self, overrides: dict[str, str]) -> "PlannerParams":
        """Return a copy with string-valued overrides coerced to field types."""
        kinds = {f.name: f.type for f in fields(self)}
        values = {}
        for key, raw in overrides.items():
            if key not in kinds:
                raise KeyError(f"unknown planner parameter {key!r}")
            values[key] = _coerce(key, kinds[key], raw)
        return replace(self, **values)


def _coerce(key, kind, raw):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if "None" in str(kind) and text.lower() in ("none", ""):
        return None
    if "bool" in str(kind):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if "int" in str(kind) and "float" not in str(kind):
        return int(text)
    return float(text)


def step_kinematics(state: RobotState, u: ControlInput, dt: float) -> RobotState:
    """Integrate the unicycle exactly for ``dt`` seconds under constant ``u``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x, y, th = arc_step(state.x, state.y, state.theta, u.v_cmd, u.omega_cmd, dt)
    return RobotState(float(x), float(y), float(th), u.v_cmd, u.omega_cmd, state.t + dt)


def arc_step(x, y, theta, v, omega, dt):
    """Vectorized exact arc integration; returns (x, y, theta) with theta wrapped."""
    if not any(isinstance(a, np.ndarray) for a in (x, y, theta, v, omega, dt)):
        return _arc_step_scalar(float(x), float(y), float(theta), float(v), float(omega), float(dt))
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    omega = np.asarray(omega, dtype=float)
    straight = np.abs(omega) < STRAIGHT_EPS
    w = np.where(straight, 0.0, omega)
    half = 0.5 * w * dt
    # chord of the arc: length v*dt*sinc(half), direction theta + half; no
    # cancellation for tiny omega, unlike the r*(sin(th1) - sin(th0)) form
    chord = v * dt * np.sinc(half / math.pi)
    nx = x + chord * np.cos(theta + half)
    ny = y + chord * np.sin(theta + half)
    nth = theta + w * dt
    return nx, ny, wrap_angle(nth)


def _arc_step_scalar(x, y, theta, v, omega, dt):
    # same arithmetic as the array path, without numpy call overhead
    w = 0.0 if abs(omega) < STRAIGHT_EPS else omega
    half = 0.5 * w * dt
    arg = math.pi * (half / math.pi)
    chord = v * dt * (math.sin(arg) / arg if arg != 0.0 else 1.0)
    return (x + chord * math.cos(theta + half), y + chord * math.sin(theta + half),
            wrap_angle(theta + w * dt))


def reachable_control_window(state: RobotState, params: PlannerParams):
    """Velocity window reachable in one edge under the acceleration limits.

    Returns ``(v_lo, v_hi, omega_lo, omega_hi)``. Motion is forward-only.
    """
    dv = params.a_max * params.dt
    dw = params.alpha_max * params.dt
    v_lo = min(max(state.v - dv, 0.0), params.v_max)
    v_hi = min(max(state.v + dv, 0.0), params.v_max)
    w_lo = min(max(state.omega - dw, -params.omega_max), params.omega_max)
    w_hi = min(max(state.omega + dw, -params.omega_max), params.omega_max)
    return v_lo, v_hi, w_lo, w_hi


def control_lattice(v_lo, v_hi, w_lo, w_hi, delta_nv, delta_nw):
    """All (delta_nv+1)*(delta_nw+1) lattice controls, velocity-major order."""
    vs = _even(v_lo, v_hi, delta_nv)
    ws = _even(w_lo, w_hi, delta_nw)
    return np.repeat(vs, len(ws)), np.tile(ws, len(vs))


def _even(lo: float, hi: float, n: int) -> np.ndarray:
    # np.linspace(lo, hi, n + 1) without its call overhead, endpoints exact
    out = np.arange(n + 1) * ((hi - lo) / n) + lo
    out[-1] = hi
    return out


def state_cost_batch(x, y, theta, target, goal, w1, w2):
    """Steering cost from many states to one target point.

    ``w1 * |x1 - x2| / |x1 - goal| + w2 * angle(heading, x2 - x1)``; the
    position term is 0 for a state sitting on the goal and the angle term is 0
    for a state sitting on the target.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    dx = target[0] - x
    dy = target[1] - y
    d_target = np.hypot(dx, dy)
    d_goal = np.hypot(goal[0] - x, goal[1] - y)
    at_goal = d_goal == 0.0
    pos_term = np.where(at_goal, 0.0, d_target / np.where(at_goal, 1.0, d_goal))
    at_target = d_target == 0.0
    safe = np.where(at_target, 1.0, d_target)
    cosang = (np.cos(theta) * dx + np.sin(theta) * dy) / safe
    ang = np.where(at_target, 0.0, np.arccos(np.clip(cosang, -1.0, 1.0)))
    return w1 * pos_term + w2 * ang


def state_cost(x1: RobotState, x2, goal, params: PlannerParams) -> float:
    return float(state_cost_batch(x1.x, x1.y, x1.theta, x2, goal, params.w1, params.w2))


def brake_control(state: RobotState, params: PlannerParams) -> ControlInput:
    """Hardest deceleration the limits allow; holds position once stopped."""
    dv = params.a_max * params.dt
    dw = params.alpha_max * params.dt
    v = max(state.v - dv, 0.0)
    w = math.copysign(max(abs(state.omega) - dw, 0.0), state.omega)
    return ControlInput(v, w)


def braking_path(state: RobotState, params: PlannerParams, substeps: int = 1):
    """Positions visited while braking from ``state`` to a standstill.

    Returns ``(xs, ys)`` sampled ``substeps`` times per edge, ending at rest.
    """
    edges = []
    s = state
    while s.v > 0.0:
        u = brake_control(s, params)
        edges.append((s.x, s.y, s.theta, u.v_cmd, u.omega_cmd))
        s = step_kinematics(s, u, params.dt)
    if not edges:
        return np.zeros(0), np.zeros(0)
    e = np.array(edges)
    h = params.dt * np.arange(1, substeps + 1) / substeps
    px, py, _ = arc_step(e[:, :1], e[:, 1:2], e[:, 2:3], e[:, 3:4], e[:, 4:5], h[None, :])
    return px.ravel(), py.ravel()

