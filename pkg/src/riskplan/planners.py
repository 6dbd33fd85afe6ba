"""Extend, the three grow strategies and the receding-horizon planning cycle."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .forest import (
    ROOTED_OWNER,
    HeuristicDistribution,
    MeetEvent,
    SubTreeForest,
    default_sigma_kappa,
    heuristic_sample,
    uniform_sample,
)
from .kinematics import (
    ControlInput,
    PlannerParams,
    RobotState,
    arc_step,
    braking_path,
    control_lattice,
    reachable_control_window,
    state_cost_batch,
)
from .timed_tree import TimedTree, Trajectory
from .world import OccupancyGrid, RiskField, predict_obstacles, segment_free

# relative slack under which two costs count as tied (lowest index wins)
TIE_RTOL = 1e-12
FREE_SAMPLE_TRIES = 100
# intermediate static checks per edge, matching the executed-motion audit
EDGE_CHECKS = 5


class PlannerKind(str, enum.Enum):
    RISK = "risk_rrt"
    BI = "bi_risk_rrt"
    MULTI = "multi_risk_rrt"

    @classmethod
    def parse(cls, text: str) -> "PlannerKind":
        aliases = {"risk": cls.RISK, "bi": cls.BI, "multi": cls.MULTI}
        key = text.strip().lower()
        if key in aliases:
            return aliases[key]
        return cls(key)

    @property
    def short(self) -> str:
        return {"risk_rrt": "risk", "bi_risk_rrt": "bi", "multi_risk_rrt": "multi"}[self.value]


class GrowOutcome(str, enum.Enum):
    REACHED = "reached"
    EXTENDED = "extended"
    REJECTED = "rejected"


def argmin_tied(values: np.ndarray) -> int:
    """Index of the minimum; values within TIE_RTOL of it tie and the lowest index wins."""
    best = values.min()
    slack = TIE_RTOL * max(1.0, abs(best)) if math.isfinite(best) else 0.0
    return int(np.flatnonzero(values <= best + slack)[0])


def select_best_node(tree: TimedTree, x_rand, goal, params: PlannerParams) -> int | None:
    """Node maximizing ``1 / (C_k + beta * path_risk)`` among nodes below the depth cap.

    Returns None when every node already sits at the horizon.
    """
    ids = tree.ids()
    ids = ids[tree.depth[ids] < params.N]
    if len(ids) == 0:
        return None
    cost = state_cost_batch(tree.x[ids], tree.y[ids], tree.theta[ids], x_rand, goal,
                            params.w1, params.w2)
    denom = cost + params.beta * tree.path_risk[ids]
    return int(ids[argmin_tied(denom)])


def best_control(state: RobotState, x_rand, goal, params: PlannerParams):
    """Simulate the control lattice one edge ahead and keep the cheapest result.

    Returns ``(index, ControlInput, (x, y, theta))``.
    """
    v_lo, v_hi, w_lo, w_hi = reachable_control_window(state, params)
    vs, ws = control_lattice(v_lo, v_hi, w_lo, w_hi, params.delta_nv, params.delta_nw)
    nx, ny, nth = arc_step(state.x, state.y, state.theta, vs, ws, params.dt)
    cost = state_cost_batch(nx, ny, nth, x_rand, goal, params.w1, params.w2)
    k = argmin_tied(cost)
    return k, ControlInput(float(vs[k]), float(ws[k])), (float(nx[k]), float(ny[k]), float(nth[k]))


def extend(tree: TimedTree, x_rand, goal, field: RiskField, params: PlannerParams) -> int | None:
    """Grow ``tree`` one edge toward ``x_rand``; returns the new node id or None."""
    best = select_best_node(tree, x_rand, goal, params)
    if best is None:
        return None
    parent = tree.state(best)
    _, u, (x, y, th) = best_control(parent, x_rand, goal, params)
    child = RobotState(x, y, th, u.v_cmd, u.omega_cmd, parent.t + params.dt)
    # the node, the edge between the two states and the stop from the node
    # must all stay clear of static obstacles
    h = params.dt * np.arange(1, EDGE_CHECKS) / EDGE_CHECKS
    ex, ey, _ = arc_step(parent.x, parent.y, parent.theta, u.v_cmd, u.omega_cmd, h)
    bx, by = braking_path(child, params, EDGE_CHECKS)
    p_all = field.static(np.concatenate(([x], ex, bx)), np.concatenate(([y], ey, by)))
    if np.any(p_all >= 0.5):
        return None
    p_static = float(p_all[0])
    risk = float(field.combined(x, y, child.t, static=p_static)[0])
    if risk >= params.risk_cap:
        return None
    return tree.add_node(best, child, u, risk, params.N, static_risk=p_static)


class MeetTracker:
    """Incremental equivalent of :func:`forest.meet`.

    Qualifying pairs can only appear when a node is created, so each new node
    registers its neighbours within ``meet_radius``. Stale pairs (dead nodes,
    merged owners) are dropped lazily and blocked pairs are dropped for good.
    """

    def __init__(self, meet_radius: float):
        self.radius = meet_radius
        self.pending: dict[tuple, float] = {}

    def clear_rooted(self):
        self.pending = {k: d for k, d in self.pending.items() if k[0] != "rooted-subtree"}

    def on_rooted_node(self, node: int, rooted: TimedTree, forest: SubTreeForest):
        p = (rooted.x[node], rooted.y[node])
        for fn in forest.within(p, self.radius).tolist():
            self.pending[("rooted-subtree", (node, fn))] = float(np.hypot(*(forest.xy[fn] - p)))

    def on_forest_node(self, fn: int, rooted: TimedTree, forest: SubTreeForest):
        p = forest.xy[fn]
        ids = rooted.ids()
        d = np.hypot(rooted.x[ids] - p[0], rooted.y[ids] - p[1])
        for rn, dist in zip(ids[d <= self.radius].tolist(), d[d <= self.radius].tolist()):
            self.pending[("rooted-subtree", (rn, fn))] = dist
        for other in forest.within(p, self.radius, exclude_owner=int(forest.owner[fn])).tolist():
            a, b = (other, fn) if other < fn else (fn, other)
            self.pending[("subtree-subtree", (a, b))] = float(np.hypot(*(forest.xy[other] - p)))

    def next_event(self, rooted: TimedTree, forest: SubTreeForest, grid: OccupancyGrid,
                   robot_radius: float) -> MeetEvent | None:
        rooted_c, sub_c = [], []
        for key, dist in list(self.pending.items()):
            kind, (a, b) = key
            if kind == "rooted-subtree":
                if a in rooted and forest.alive[b]:
                    rooted_c.append((dist, a, b))
                else:
                    del self.pending[key]
            else:
                if forest.alive[a] and forest.alive[b] and forest.owner[a] != forest.owner[b]:
                    if forest.owner[a] > forest.owner[b]:
                        a, b = b, a
                    sub_c.append((dist, a, b, key))
                else:
                    del self.pending[key]
        for dist, rn, fn in sorted(rooted_c):
            if segment_free(grid, (rooted.x[rn], rooted.y[rn]), forest.xy[fn], robot_radius):
                return MeetEvent("rooted-subtree", (ROOTED_OWNER, int(forest.owner[fn])), (rn, fn), dist)
            del self.pending[("rooted-subtree", (rn, fn))]
        for dist, a, b, key in sorted(sub_c):
            if segment_free(grid, forest.xy[a], forest.xy[b], robot_radius):
                return MeetEvent("subtree-subtree", (int(forest.owner[a]), int(forest.owner[b])), (a, b), dist)
            del self.pending[key]
        return None

    def processed(self, event: MeetEvent):
        if event.kind == "rooted-subtree":
            self.pending.pop(("rooted-subtree", event.contact), None)
        else:
            a, b = event.contact
            self.pending.pop(("subtree-subtree", (min(a, b), max(a, b))), None)


@dataclass
class CycleStats:
    iterations: int = 0
    nodes_added: int = 0
    rejected: int = 0
    removed_by_risk: int = 0
    subtree_count: int = 0
    forest_nodes: int = 0
    meets: int = 0
    merges: int = 0
    reached: bool = False
    tree_size: int = 0


@dataclass
class PlanCycleReport:
    trajectory: Trajectory | None
    stats: CycleStats


@dataclass
class TraceEntry:
    sample: tuple[float, float] | None
    branch: str
    outcome: str


class Planner:
    """One planner instance per episode: rooted tree, sub-tree forest and RNG stream."""

    def __init__(self, kind: PlannerKind | str, params: PlannerParams, grid: OccupancyGrid,
                 start: RobotState, goal, robot_radius: float, seed: int = 0,
                 record_trace: bool = False):
        self.kind = PlannerKind.parse(kind) if isinstance(kind, str) else kind
        self.params = params
        self.grid = grid
        self.goal = np.asarray(goal, dtype=float)
        self.robot_radius = robot_radius
        self.rng = np.random.default_rng(seed)
        self.sigma_kappa = params.sigma_kappa or default_sigma_kappa(grid)
        self.rooted = TimedTree(start)
        self.forest = SubTreeForest()
        self.tracker = MeetTracker(params.meet_radius)
        self.field = RiskField(grid, robot_radius, (), start.t, params.dt)
        self.heuristic: HeuristicDistribution | None = None
        self.burst_left = 0
        self.met = False
        self.trace: list[TraceEntry] | None = [] if record_trace else None
        self._stats = CycleStats()
        if self.kind is not PlannerKind.RISK:
            self._seed_goal_tree()

    # -- helpers ---------------------------------------------------------
    def _seed_goal_tree(self):
        sid = self.forest.add_tree(self.goal, contains_goal=True)
        self.tracker.on_forest_node(self.forest.subtrees[sid].node_ids[0], self.rooted, self.forest)

    def _restart_goal_tree(self):
        """Fresh single-node goal tree and no heuristic, as at the start of an episode."""
        self.forest = SubTreeForest()
        self.tracker = MeetTracker(self.params.meet_radius)
        self.heuristic = None
        self.met = False
        self._seed_goal_tree()

    def _log(self, sample, branch, outcome):
        if self.trace is not None:
            s = None if sample is None else (float(sample[0]), float(sample[1]))
            self.trace.append(TraceEntry(s, branch, outcome.value if isinstance(outcome, GrowOutcome) else outcome))

    def sample_free(self) -> np.ndarray:
        """Uniform map sample whose footprint is statically free (best effort)."""
        bounds = self.grid.bounds
        for _ in range(FREE_SAMPLE_TRIES):
            p = uniform_sample(bounds, self.rng)
            if self.field.static(p[0], p[1])[0] < 0.5:
                return p
        return p

    def in_goal_region(self, node: int) -> bool:
        return math.hypot(self.rooted.x[node] - self.goal[0], self.rooted.y[node] - self.goal[1]) < self.params.goal_radius

    def extend(self, x_rand) -> int | None:
        node = extend(self.rooted, x_rand, self.goal, self.field, self.params)
        if node is None:
            self._stats.rejected += 1
            return None
        self._stats.nodes_added += 1
        if self.kind is not PlannerKind.RISK:
            self.tracker.on_rooted_node(node, self.rooted, self.forest)
        return node

    def _extend_outcome(self, x_rand) -> GrowOutcome:
        node = self.extend(x_rand)
        if node is None:
            return GrowOutcome.REJECTED
        return GrowOutcome.REACHED if self.in_goal_region(node) else GrowOutcome.EXTENDED

    def _build_heuristic(self, sid: int, contact: int) -> HeuristicDistribution:
        path = self.forest.extract_heuristic_path(sid, contact)
        return HeuristicDistribution(path, self.sigma_kappa, self.params.h_r, self.grid.bounds)

    def _heuristic_step(self, branch: str = "heuristic") -> GrowOutcome:
        x_rand, which = heuristic_sample(self.heuristic, self.rng, return_branch=True)
        outcome = self._extend_outcome(x_rand)
        self._log(x_rand, f"{branch}-{which}", outcome)
        return outcome

    # -- grow strategies -------------------------------------------------
    def grow(self) -> GrowOutcome:
        if self.kind is PlannerKind.RISK:
            return self.grow_uniform()
        if self.kind is PlannerKind.BI:
            return self.grow_bi()
        return self.grow_multi()

    def grow_uniform(self) -> GrowOutcome:
        x_rand = self.sample_free()
        outcome = self._extend_outcome(x_rand)
        self._log(x_rand, "uniform", outcome)
        return outcome

    def grow_bi(self) -> GrowOutcome:
        if self.met:
            return self._heuristic_step()
        x_rand = self.sample_free()
        outcome = self._extend_outcome(x_rand)
        sid = self.forest.goal_tree
        # one edge of kinodynamic reach per iteration, like an Extend of the rooted tree
        step = self.params.v_max * self.params.dt
        node = self.forest.steer_subtree(sid, x_rand, step, self.grid, self.robot_radius)
        if node is not None:
            self.tracker.on_forest_node(node, self.rooted, self.forest)
        self._log(x_rand, "bi-uniform", outcome)
        event = self.tracker.next_event(self.rooted, self.forest, self.grid, self.robot_radius)
        if event is not None:
            self._stats.meets += 1
            self.met = True
            self.heuristic = self._build_heuristic(event.ids[1], event.contact[1])
            self.tracker.processed(event)
        return outcome

    def grow_multi(self) -> GrowOutcome:
        if self.burst_left > 0:
            self.burst_left -= 1
            return self._heuristic_step()
        outcome = GrowOutcome.REJECTED
        event = self.tracker.next_event(self.rooted, self.forest, self.grid, self.robot_radius)
        if event is None:
            outcome = self._multi_search()
            if outcome is GrowOutcome.REACHED:
                return outcome
            event = self.tracker.next_event(self.rooted, self.forest, self.grid, self.robot_radius)
        if event is not None:
            self.tracker.processed(event)
            if event.kind == "rooted-subtree":
                outcome = self._use_subtree(event)
            else:
                self._stats.merges += 1
                keep, absorb = sorted(event.ids)
                contact = event.contact if event.ids[0] == keep else event.contact[::-1]
                self.forest.merge_subtrees(keep, absorb, contact)
                self._log(None, "merge", GrowOutcome.EXTENDED)
        return outcome

    def _multi_search(self) -> GrowOutcome:
        x_rand = self.sample_free()
        d_root, _ = self.rooted.nearest(x_rand)
        if d_root < self.params.lam:
            outcome = self._extend_outcome(x_rand)
            self._log(x_rand, "rooted", outcome)
            return outcome
        if self.forest.node_count:
            d_sub, sid, _ = self.forest.nearest(x_rand)
            if d_sub < self.params.lam:
                node = self.forest.grow_subtree(sid, x_rand, self.grid, self.robot_radius)
                if node is None:
                    self._log(x_rand, "subtree-grow", GrowOutcome.REJECTED)
                    return GrowOutcome.REJECTED
                self.tracker.on_forest_node(node, self.rooted, self.forest)
                self._log(x_rand, "subtree-grow", GrowOutcome.EXTENDED)
                return GrowOutcome.EXTENDED
        sid = self.forest.add_tree(x_rand)
        self.tracker.on_forest_node(self.forest.subtrees[sid].node_ids[0], self.rooted, self.forest)
        self._log(x_rand, "subtree-new", GrowOutcome.EXTENDED)
        return GrowOutcome.EXTENDED

    def _use_subtree(self, event: MeetEvent) -> GrowOutcome:
        self._stats.meets += 1
        sid = event.ids[1]
        self.heuristic = self._build_heuristic(sid, event.contact[1])
        outcome = self._heuristic_step("meet")
        self.forest.consume(sid, self.params.retain_goal_tree)
        burst = self.params.heuristic_burst or self.heuristic.L
        self.burst_left = max(0, burst - 1)
        return outcome

    # -- receding horizon -------------------------------------------------
    def observe(self, obstacles, t_now: float):
        preds = predict_obstacles(obstacles, t_now, self.params)
        self.field = RiskField(self.grid, self.robot_radius, preds, t_now, self.params.dt)

    def plan_cycle(self, obstacles, t_now: float) -> PlanCycleReport:
        self._stats = stats = CycleStats()
        self.observe(obstacles, t_now)
        stats.removed_by_risk = self.rooted.refresh_risks(self.field, self.params.risk_cap)
        if self.kind is PlannerKind.BI:
            self._restart_goal_tree()
        elif self.kind is PlannerKind.MULTI and self.forest.goal_tree is None:
            self._seed_goal_tree()
        for _ in range(self.params.iterations_per_cycle):
            stats.iterations += 1
            if self.grow() is GrowOutcome.REACHED:
                stats.reached = True
                break
        stats.subtree_count = len(self.forest)
        stats.forest_nodes = self.forest.node_count
        stats.tree_size = len(self.rooted)
        return PlanCycleReport(self.rooted.choose_best_trajectory(self.goal), stats)

    def commit(self, child: int):
        """The robot executed the edge into ``child``; it becomes the new root."""
        self.rooted.prune_unreachable(child)

    def reset(self, state: RobotState):
        """Start a fresh rooted tree at ``state`` (used when nothing was executable)."""
        self.rooted = TimedTree(state)
        self.tracker.clear_rooted()
        self.tracker.on_rooted_node(self.rooted.root, self.rooted, self.forest)
