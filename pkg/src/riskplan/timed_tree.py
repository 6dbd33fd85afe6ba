"""Time-indexed kinodynamic tree rooted at the robot's current state."""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .kinematics import ControlInput, RobotState
from .world import ContractViolation, RiskField

# trajectories whose cumulative risk reaches this are never executed
EXEC_RISK_LIMIT = 0.5


class TreeAuditError(AssertionError):
    pass


@dataclass(frozen=True)
class TimedNode:
    id: int
    state: RobotState
    depth: int
    parent: int | None
    control_from_parent: ControlInput | None
    step_risk: float
    path_risk: float


@dataclass(frozen=True)
class Trajectory:
    leaf: int
    node_ids: tuple[int, ...]  # root excluded, root child first
    controls: tuple[ControlInput, ...]

    @property
    def first_child(self) -> int:
        return self.node_ids[0]


_FLOAT_COLS = ("x", "y", "theta", "v", "omega", "t", "ctrl_v", "ctrl_w",
               "step_risk", "path_risk", "static_risk")


class TimedTree:
    """Node store backed by growable numpy columns.

    Node ids are array indices and are never reused, so "lowest id" is also
    "oldest node". Removed nodes stay in the arrays with ``alive`` cleared.
    """

    def __init__(self, root_state: RobotState, root_risk: float = 0.0, capacity: int = 256):
        self._cap = capacity
        for name in _FLOAT_COLS:
            setattr(self, name, np.zeros(capacity))
        self.depth = np.zeros(capacity, dtype=np.int64)
        self.parent = np.full(capacity, -1, dtype=np.int64)
        self.alive = np.zeros(capacity, dtype=bool)
        self.children: dict[int, list[int]] = {}
        self.n = 0
        self._ids = None
        self.root = self._append(root_state, -1, 0, None, root_risk, 0.0, 0.0)

    # -- storage ---------------------------------------------------------
    def _grow(self):
        new_cap = self._cap * 2
        for name in (*_FLOAT_COLS, "depth", "parent", "alive"):
            old = getattr(self, name)
            arr = np.zeros(new_cap, dtype=old.dtype)
            if name == "parent":
                arr[:] = -1
            arr[: self._cap] = old
            setattr(self, name, arr)
        self._cap = new_cap

    def _append(self, state, parent, depth, control, step_risk, path_risk, static_risk):
        if self.n == self._cap:
            self._grow()
        i = self.n
        self.x[i], self.y[i], self.theta[i] = state.x, state.y, state.theta
        self.v[i], self.omega[i], self.t[i] = state.v, state.omega, state.t
        if control is not None:
            self.ctrl_v[i], self.ctrl_w[i] = control.v_cmd, control.omega_cmd
        self.step_risk[i] = step_risk
        self.path_risk[i] = path_risk
        self.static_risk[i] = static_risk
        self.depth[i] = depth
        self.parent[i] = parent
        self.alive[i] = True
        self.children[i] = []
        if parent >= 0:
            self.children[parent].append(i)
        self.n += 1
        self._ids = None
        return i

    def ids(self) -> np.ndarray:
        """Alive node ids in ascending order."""
        if self._ids is None:
            self._ids = np.flatnonzero(self.alive[: self.n])
        return self._ids

    def __len__(self) -> int:
        return len(self.ids())

    def __contains__(self, node_id) -> bool:
        return 0 <= node_id < self.n and bool(self.alive[node_id])

    def state(self, i: int) -> RobotState:
        return RobotState(float(self.x[i]), float(self.y[i]), float(self.theta[i]),
                          float(self.v[i]), float(self.omega[i]), float(self.t[i]))

    def node(self, i: int) -> TimedNode:
        if i not in self:
            raise KeyError(i)
        is_root = i == self.root
        return TimedNode(
            id=int(i),
            state=self.state(i),
            depth=int(self.depth[i]),
            parent=None if is_root else int(self.parent[i]),
            control_from_parent=None if is_root else ControlInput(float(self.ctrl_v[i]), float(self.ctrl_w[i])),
            step_risk=float(self.step_risk[i]),
            path_risk=float(self.path_risk[i]),
        )

    # -- mutation --------------------------------------------------------
    def add_node(self, parent_id: int, state: RobotState, control: ControlInput,
                 step_risk: float, max_depth: int, static_risk: float = 0.0) -> int | None:
        """Attach a child; returns its id, or None when the depth cap is exceeded."""
        if parent_id not in self:
            raise ContractViolation(f"parent {parent_id} is not in the tree")
        depth = int(self.depth[parent_id]) + 1
        if depth > max_depth:
            return None
        path_risk = 1.0 - (1.0 - self.path_risk[parent_id]) * (1.0 - step_risk)
        return self._append(state, parent_id, depth, control, step_risk, path_risk, static_risk)

    def subtree(self, node_id: int) -> list[int]:
        """Ids of ``node_id`` and all its alive descendants, preorder."""
        out, stack = [], [node_id]
        while stack:
            i = stack.pop()
            out.append(i)
            stack.extend(reversed(self.children[i]))
        return out

    def _kill(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        self.alive[ids] = False
        for i in ids.tolist():
            self.children.pop(i, None)
        self._ids = None

    def remove_subtree(self, node_id: int) -> int:
        if node_id == self.root:
            raise ContractViolation("the root cannot be removed")
        doomed = self.subtree(node_id)
        self.children[int(self.parent[node_id])].remove(node_id)
        self._kill(doomed)
        return len(doomed)

    def prune_unreachable(self, executed_child: int) -> "TimedTree":
        """Make ``executed_child`` the root and drop every other branch."""
        if executed_child not in self or self.parent[executed_child] != self.root or executed_child == self.root:
            raise ContractViolation(f"node {executed_child} is not a child of the root")
        keep = self.subtree(executed_child)
        mask = np.zeros(self.n, dtype=bool)
        mask[keep] = True
        self._kill(np.flatnonzero(self.alive[: self.n] & ~mask))
        self.depth[keep] -= 1
        self.parent[executed_child] = -1
        self.ctrl_v[executed_child] = self.ctrl_w[executed_child] = 0.0
        self.root = executed_child
        self.path_risk[executed_child] = 0.0
        self._recompute_path_risk()
        return self

    def _recompute_path_risk(self):
        ids = self.ids()
        depth = self.depth[ids]
        top = int(depth.max()) if len(ids) else 0
        for d in range(1, top + 1):
            sel = ids[depth == d]
            self.path_risk[sel] = 1.0 - (1.0 - self.path_risk[self.parent[sel]]) * (1.0 - self.step_risk[sel])

    def refresh_risks(self, field: RiskField, risk_cap: float) -> int:
        """Recompute step and path risks against ``field``; drop branches at or above ``risk_cap``.

        Returns the number of removed nodes.
        """
        ids = self.ids()
        stat = self.static_risk[ids]
        risk = field.combined(self.x[ids], self.y[ids], self.t[ids], static=stat)
        self.step_risk[ids] = risk
        removed = 0
        doomed = [int(i) for i, r in zip(ids, risk) if r >= risk_cap and i != self.root]
        for i in doomed:
            if self.alive[i]:
                removed += self.remove_subtree(i)
        self.path_risk[self.root] = 0.0
        self._recompute_path_risk()
        return removed

    # -- queries ---------------------------------------------------------
    def nearest(self, point) -> tuple[float, int]:
        ids = self.ids()
        d = np.hypot(self.x[ids] - point[0], self.y[ids] - point[1])
        k = int(np.argmin(d))
        return float(d[k]), int(ids[k])

    def path_to(self, node_id: int) -> list[int]:
        """Node ids from the root's child down to ``node_id``."""
        path = []
        i = node_id
        while i != self.root:
            path.append(int(i))
            i = int(self.parent[i])
        return path[::-1]

    def choose_best_trajectory(self, goal) -> Trajectory | None:
        """Highest ``(1 - path_risk) / (1 + dist_to_goal)`` among executable nodes."""
        ids = self.ids()
        ok = (self.depth[ids] >= 1) & (self.path_risk[ids] < EXEC_RISK_LIMIT)
        cand = ids[ok]
        if len(cand) == 0:
            return None
        dist = np.hypot(self.x[cand] - goal[0], self.y[cand] - goal[1])
        weight = (1.0 - self.path_risk[cand]) / (1.0 + dist)
        leaf = int(cand[int(np.argmax(weight))])
        path = self.path_to(leaf)
        controls = tuple(ControlInput(float(self.ctrl_v[i]), float(self.ctrl_w[i])) for i in path)
        return Trajectory(leaf, tuple(path), controls)

    # -- export / audit --------------------------------------------------
    def export_csv(self) -> str:
        buf = io.StringIO()
        buf.write("id,x,y,t,depth,parent\n")
        for i in self.ids().tolist():
            parent = "" if i == self.root else str(int(self.parent[i]))
            buf.write(f"{i},{self.x[i]:.4f},{self.y[i]:.4f},{self.t[i]:.3f},{int(self.depth[i])},{parent}\n")
        return buf.getvalue()

    def audit(self, dt: float, max_depth: int, tol: float = 1e-9) -> None:
        """Raise TreeAuditError if any structural invariant is broken."""
        ids = self.ids()
        if self.root not in self:
            raise TreeAuditError("root is not alive")
        if self.depth[self.root] != 0:
            raise TreeAuditError("root depth must be 0")
        roots = [i for i in ids if self.parent[i] < 0]
        if roots != [self.root]:
            raise TreeAuditError(f"expected exactly one root, found {roots}")
        reached = set(self.subtree(self.root))
        if reached != set(ids.tolist()):
            raise TreeAuditError("alive nodes unreachable from the root")
        for i in ids:
            if i == self.root:
                continue
            p = self.parent[i]
            if not self.alive[p]:
                raise TreeAuditError(f"node {i} has a dead parent")
            if self.depth[i] != self.depth[p] + 1:
                raise TreeAuditError(f"node {i}: depth {self.depth[i]} != parent depth + 1")
            if self.depth[i] > max_depth:
                raise TreeAuditError(f"node {i}: depth {self.depth[i]} exceeds {max_depth}")
            if abs(self.t[i] - self.t[p] - dt) > tol:
                raise TreeAuditError(f"node {i}: timestamp is not parent + dt")
            expect = 1.0 - (1.0 - self.path_risk[p]) * (1.0 - self.step_risk[i])
            if abs(self.path_risk[i] - expect) > tol:
                raise TreeAuditError(f"node {i}: path risk recurrence broken")
