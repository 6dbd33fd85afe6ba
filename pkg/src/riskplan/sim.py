"""Closed-loop episode runner: crowd playback, one-step execution, ground-truth audit."""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .kinematics import ControlInput, PlannerParams, RobotState, arc_step, brake_control, step_kinematics
from .planners import Planner, PlannerKind
from .world import (
    ContractViolation,
    MovingObstacle,
    OccupancyGrid,
    load_crowd,
    load_grid,
    static_risk,
)

AUDIT_SUBSTEPS = 5


class ConfigError(ValueError):
    """Scenario or parameter problem detected before any cycle runs."""


@dataclass
class Scenario:
    grid: OccupancyGrid
    start: RobotState
    goal: tuple[float, float]
    crowd: list[MovingObstacle] = field(default_factory=list)
    robot_radius: float = 0.3
    params: PlannerParams = field(default_factory=PlannerParams)
    max_sim_time: float = 600.0
    seed: int = 0
    name: str = "scenario"

    def validate(self) -> None:
        if not self.max_sim_time > 0:
            raise ConfigError("max_sim_time must be positive")
        if not self.robot_radius > 0:
            raise ConfigError("robot_radius must be positive")
        for label, p in (("start", (self.start.x, self.start.y)), ("goal", self.goal)):
            if static_risk(self.grid, p, self.robot_radius) >= 0.5:
                raise ConfigError(f"{label} position {tuple(p)} is not in free space")
        try:
            self.params.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def _floats(text: str, n: int, key: str) -> list[float]:
    parts = text.replace(",", " ").split()
    if len(parts) != n:
        raise ConfigError(f"{key}: expected {n} numbers, got {text!r}")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"{key}: non-numeric value in {text!r}") from None


SCENARIO_KEYS = {"name", "grid", "crowd", "start", "goal", "robot_radius",
                 "obstacle_radius", "max_sim_time", "seed"}


def parse_scenario(text: str, base_dir: Path | str = ".",
                   overrides: dict[str, str] | None = None) -> Scenario:
    """Parse the ``key = value`` scenario format.

    Required keys: ``grid``, ``start`` (x y [theta]), ``goal`` (x y). Optional:
    ``crowd``, ``robot_radius``, ``obstacle_radius``, ``max_sim_time``, ``seed``,
    ``name`` and any ``params.<field>`` planner override. Paths are relative to
    ``base_dir``. ``overrides`` apply on top as planner parameters.
    """
    base = Path(base_dir)
    values: dict[str, str] = {}
    param_over: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"scenario line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("params."):
            param_over[key[len("params."):]] = value
        elif key in SCENARIO_KEYS:
            values[key] = value
        else:
            raise ConfigError(f"scenario line {lineno}: unknown key {key!r}")
    for req in ("grid", "start", "goal"):
        if req not in values:
            raise ConfigError(f"scenario is missing required key {req!r}")
    try:
        grid = load_grid((base / values["grid"]).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read grid file: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"grid file: {exc}") from None
    start_vals = values["start"].replace(",", " ").split()
    if len(start_vals) == 2:
        start_vals.append("0")
    sx, sy, sth = _floats(" ".join(start_vals), 3, "start")
    gx, gy = _floats(values["goal"], 2, "goal")
    ob_radius = float(values.get("obstacle_radius", 0.3))
    crowd: list[MovingObstacle] = []
    if values.get("crowd"):
        try:
            crowd = load_crowd((base / values["crowd"]).read_text(), radius=ob_radius)
        except OSError as exc:
            raise ConfigError(f"cannot read crowd file: {exc}") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    try:
        params = PlannerParams().with_overrides({**param_over, **(overrides or {})})
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"planner parameters: {exc}") from None
    try:
        scenario = Scenario(
            grid=grid,
            start=RobotState(sx, sy, sth),
            goal=(gx, gy),
            crowd=crowd,
            robot_radius=float(values.get("robot_radius", 0.3)),
            params=params,
            max_sim_time=float(values.get("max_sim_time", 600.0)),
            seed=int(values.get("seed", 0)),
            name=values.get("name", "scenario"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    scenario.validate()
    return scenario


def load_scenario(path: Path | str, overrides: dict[str, str] | None = None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario: {exc}") from None
    return parse_scenario(text, path.parent, overrides)


def crowd_position(obstacle: MovingObstacle, t: float) -> np.ndarray:
    """Linear interpolation of the recorded track; clamped outside its span."""
    if len(obstacle.times) == 0:
        raise ContractViolation(f"obstacle {obstacle.id} has an empty trajectory")
    return np.array([np.interp(t, obstacle.times, obstacle.positions[:, 0]),
                     np.interp(t, obstacle.times, obstacle.positions[:, 1])])


def check_collision(position, robot_radius: float, grid: OccupancyGrid,
                    crowd, t: float) -> bool:
    """Ground-truth contact test; touching discs count as a collision."""
    if static_risk(grid, position, robot_radius) >= 0.5:
        return True
    for ob in crowd:
        c = crowd_position(ob, t)
        if math.hypot(position[0] - c[0], position[1] - c[1]) <= robot_radius + ob.radius:
            return True
    return False


@dataclass
class EpisodeResult:
    kind: str
    seed: int
    success: bool
    execution_time: float
    trajectory_length: float
    collided: bool
    cycles: int
    final_state: tuple[float, float, float, float, float, float]
    cycle_stats: list[dict] = field(default_factory=list)
    collision_times: list[float] = field(default_factory=list)
    # diagnostic only; excluded from equality and serialization
    wall_time: float = field(default=0.0, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("wall_time")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def summary(self) -> str:
        status = "success" if self.success else "failure"
        return (f"{self.kind} seed={self.seed}: {status}, execution_time={self.execution_time:.1f}s, "
                f"trajectory_length={self.trajectory_length:.2f}m, collided={self.collided}, "
                f"cycles={self.cycles}")


def _audit_edge(state: RobotState, u: ControlInput, scenario: Scenario) -> list[float]:
    dt = scenario.params.dt
    hits = []
    for s in range(1, AUDIT_SUBSTEPS + 1):
        h = dt * s / AUDIT_SUBSTEPS
        x, y, _ = arc_step(state.x, state.y, state.theta, u.v_cmd, u.omega_cmd, h)
        t = state.t + h
        if check_collision((float(x), float(y)), scenario.robot_radius, scenario.grid, scenario.crowd, t):
            hits.append(round(t, 6))
    return hits


SnapshotHook = Callable[[int, Planner, RobotState, object], None]


def run_episode(scenario: Scenario, kind: PlannerKind | str, seed: int | None = None,
                snapshot_every: int | None = None, snapshot_hook: SnapshotHook | None = None
                ) -> EpisodeResult:
    """Simulate one episode: plan, execute the first control, replan, until goal or timeout."""
    scenario.validate()
    kind = PlannerKind.parse(kind) if isinstance(kind, str) else kind
    seed = scenario.seed if seed is None else seed
    params = scenario.params
    dt = params.dt
    goal = np.asarray(scenario.goal, dtype=float)
    wall0 = time.perf_counter()
    planner = Planner(kind, params, scenario.grid, scenario.start, goal, scenario.robot_radius, seed)
    state = scenario.start
    max_cycles = int(math.ceil(scenario.max_sim_time / dt - 1e-9))
    length = 0.0
    cycles = 0
    collisions: list[float] = []
    stats_log = []
    success = math.hypot(state.x - goal[0], state.y - goal[1]) < params.goal_radius
    while not success and cycles < max_cycles:
        observed = [o for o in (ob.observed_until(state.t) for ob in scenario.crowd) if o is not None]
        report = planner.plan_cycle(observed, state.t)
        traj = report.trajectory
        if snapshot_every and snapshot_hook and cycles % snapshot_every == 0:
            snapshot_hook(cycles, planner, state, traj)
        u = traj.controls[0] if traj is not None else brake_control(state, params)
        collisions.extend(_audit_edge(state, u, scenario))
        if traj is not None:
            planner.commit(traj.first_child)
            state = planner.rooted.state(planner.rooted.root)
        else:
            state = step_kinematics(state, u, dt)
            planner.reset(state)
        length += abs(u.v_cmd) * dt
        cycles += 1
        row = asdict(report.stats)
        row["executed"] = traj is not None
        stats_log.append(row)
        success = math.hypot(state.x - goal[0], state.y - goal[1]) < params.goal_radius
    return EpisodeResult(
        kind=kind.value,
        seed=int(seed),
        success=bool(success),
        execution_time=cycles * dt,
        trajectory_length=length,
        collided=bool(collisions),
        cycles=cycles,
        final_state=(state.x, state.y, state.theta, state.v, state.omega, state.t),
        cycle_stats=stats_log,
        collision_times=collisions,
        wall_time=time.perf_counter() - wall0,
    )
