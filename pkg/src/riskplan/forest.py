"""Position-only sub-trees and the Gaussian-mixture heuristic sampler.

Sub-trees carry no timestamps or kinematics; they only map free space so the
rooted tree can be steered toward promising regions without connecting
trees under the dynamics.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .timed_tree import TimedTree, TreeAuditError
from .world import ContractViolation, OccupancyGrid, segment_free

ROOTED_OWNER = -1


@dataclass
class SubTree:
    id: int
    node_ids: list[int] = field(default_factory=list)  # insertion order
    contains_goal: bool = False

    def __len__(self):
        return len(self.node_ids)


@dataclass(frozen=True)
class MeetEvent:
    kind: str  # "rooted-subtree" or "subtree-subtree"
    ids: tuple[int, int]  # (ROOTED_OWNER, subtree) or (subtree_a, subtree_b) with a < b
    contact: tuple[int, int]  # node in ids[0], node in ids[1]
    distance: float

    @property
    def key(self):
        return (self.kind, self.contact)


class SubTreeForest:
    """All sub-trees share one node store; node ids are global and never reused."""

    def __init__(self, capacity: int = 256):
        self._cap = capacity
        self.xy = np.zeros((capacity, 2))
        self.parent = np.full(capacity, -1, dtype=np.int64)
        self.owner = np.full(capacity, -1, dtype=np.int64)
        self.alive = np.zeros(capacity, dtype=bool)
        self.n = 0
        self.subtrees: dict[int, SubTree] = {}
        self.goal_node: int | None = None
        self._next_tree = 0
        self._ids = None

    # -- storage ---------------------------------------------------------
    def _new_node(self, point, owner, parent) -> int:
        if self.n == self._cap:
            self._cap *= 2
            xy = np.zeros((self._cap, 2))
            xy[: self.n] = self.xy[: self.n]
            self.xy = xy
            for name, fill in (("parent", -1), ("owner", -1), ("alive", False)):
                old = getattr(self, name)
                arr = np.full(self._cap, fill, dtype=old.dtype)
                arr[: self.n] = old[: self.n]
                setattr(self, name, arr)
        i = self.n
        self.xy[i] = point
        self.parent[i] = parent
        self.owner[i] = owner
        self.alive[i] = True
        self.n += 1
        self._ids = None
        self.subtrees[owner].node_ids.append(i)
        return i

    def ids(self) -> np.ndarray:
        if self._ids is None:
            self._ids = np.flatnonzero(self.alive[: self.n])
        return self._ids

    def __len__(self) -> int:
        return len(self.subtrees)

    @property
    def node_count(self) -> int:
        return len(self.ids())

    def point(self, node_id: int) -> np.ndarray:
        return self.xy[node_id]

    @property
    def goal_tree(self) -> int | None:
        for sid, st in self.subtrees.items():
            if st.contains_goal:
                return sid
        return None

    # -- operations ------------------------------------------------------
    def add_tree(self, point, contains_goal: bool = False) -> int:
        """Create a single-node sub-tree at ``point``; returns the sub-tree id."""
        sid = self._next_tree
        self._next_tree += 1
        self.subtrees[sid] = SubTree(sid, [], contains_goal)
        node = self._new_node(np.asarray(point, dtype=float), sid, -1)
        if contains_goal:
            self.goal_node = node
        return sid

    def root_of(self, sid: int) -> int:
        for i in self.subtrees[sid].node_ids:
            if self.parent[i] < 0:
                return i
        raise TreeAuditError(f"sub-tree {sid} has no root")

    def nearest(self, point, subtree: int | None = None) -> tuple[float, int, int]:
        """Euclidean nearest node as ``(distance, owner, node)``; ties by lowest (owner, node)."""
        if subtree is None:
            ids = self.ids()
        else:
            ids = np.asarray(self.subtrees[subtree].node_ids, dtype=np.int64)
        if len(ids) == 0:
            raise ContractViolation("nearest() on an empty forest")
        d = np.hypot(self.xy[ids, 0] - point[0], self.xy[ids, 1] - point[1])
        best = d.min()
        tied = ids[d == best]
        owners = self.owner[tied]
        order = np.lexsort((tied, owners))
        k = tied[order[0]]
        return float(best), int(self.owner[k]), int(k)

    def within(self, point, radius: float, exclude_owner: int | None = None) -> np.ndarray:
        ids = self.ids()
        d2 = (self.xy[ids, 0] - point[0]) ** 2 + (self.xy[ids, 1] - point[1]) ** 2
        sel = d2 <= radius * radius
        if exclude_owner is not None:
            sel &= self.owner[ids] != exclude_owner
        return ids[sel]

    def grow_subtree(self, sid: int, x_rand, grid: OccupancyGrid, robot_radius: float) -> int | None:
        """Link ``x_rand`` to its nearest node in sub-tree ``sid`` if the edge is free."""
        _, _, near = self.nearest(x_rand, subtree=sid)
        if not segment_free(grid, self.xy[near], x_rand, robot_radius):
            return None
        return self._new_node(np.asarray(x_rand, dtype=float), sid, near)

    def steer_subtree(self, sid: int, x_rand, step: float, grid: OccupancyGrid,
                      robot_radius: float) -> int | None:
        """Grow sub-tree ``sid`` from its nearest node toward ``x_rand`` by at most ``step``."""
        _, _, near = self.nearest(x_rand, subtree=sid)
        a = self.xy[near]
        delta = np.asarray(x_rand, dtype=float) - a
        dist = float(np.hypot(*delta))
        if dist == 0.0:
            return None
        target = a + delta * min(1.0, step / dist)
        if not segment_free(grid, a, target, robot_radius):
            return None
        return self._new_node(target, sid, near)

    def _reroot(self, new_root: int):
        prev, cur = -1, new_root
        while cur >= 0:
            nxt = int(self.parent[cur])
            self.parent[cur] = prev
            prev, cur = cur, nxt

    def merge_subtrees(self, keep: int, absorb: int, contact: tuple[int, int]) -> int:
        """Hang ``absorb`` (re-rooted at its contact node) under ``keep``'s contact node."""
        if keep == absorb:
            raise ContractViolation("cannot merge a sub-tree into itself")
        if keep not in self.subtrees or absorb not in self.subtrees:
            raise ContractViolation("both sub-trees must exist")
        keep_node, absorb_node = contact
        if self.owner[keep_node] != keep or self.owner[absorb_node] != absorb:
            raise ContractViolation("contact nodes do not belong to the given sub-trees")
        self._reroot(absorb_node)
        self.parent[absorb_node] = keep_node
        moved = self.subtrees.pop(absorb)
        self.owner[moved.node_ids] = keep
        target = self.subtrees[keep]
        target.node_ids.extend(moved.node_ids)
        target.contains_goal = target.contains_goal or moved.contains_goal
        return keep

    def delete(self, sid: int) -> None:
        st = self.subtrees.pop(sid)
        self.alive[st.node_ids] = False
        if self.goal_node is not None and self.goal_node in st.node_ids:
            self.goal_node = None
        self._ids = None

    def consume(self, sid: int, retain_goal_tree: bool = False) -> bool:
        """Delete a used sub-tree unless it is the goal tree and retention is on.

        Returns True when the sub-tree was removed.
        """
        st = self.subtrees[sid]
        if st.contains_goal and retain_goal_tree:
            return False
        self.delete(sid)
        return True

    def _path_to_root(self, node: int) -> list[int]:
        out = [node]
        while self.parent[out[-1]] >= 0:
            out.append(int(self.parent[out[-1]]))
        return out

    def extract_heuristic_path(self, sid: int, contact: int) -> np.ndarray:
        """Goal-to-contact path for the goal tree; every node otherwise."""
        st = self.subtrees.get(sid)
        if st is None or contact not in st.node_ids:
            raise ContractViolation(f"node {contact} is not in sub-tree {sid}")
        if not st.contains_goal:
            return self.xy[st.node_ids].copy()
        up_goal = self._path_to_root(self.goal_node)
        up_contact = self._path_to_root(contact)
        on_contact_side = set(up_contact)
        lca_idx = next(i for i, n in enumerate(up_goal) if n in on_contact_side)
        lca = up_goal[lca_idx]
        down = up_contact[: up_contact.index(lca)][::-1]
        path = up_goal[: lca_idx + 1] + down
        return self.xy[path].copy()

    # -- export / audit --------------------------------------------------
    def export_csv(self) -> str:
        buf = io.StringIO()
        buf.write("id,x,y,parent,subtree\n")
        for sid in sorted(self.subtrees):
            for i in self.subtrees[sid].node_ids:
                parent = "" if self.parent[i] < 0 else str(int(self.parent[i]))
                buf.write(f"{i},{self.xy[i, 0]:.4f},{self.xy[i, 1]:.4f},{parent},{sid}\n")
        return buf.getvalue()

    def audit(self) -> None:
        seen = set()
        for sid, st in self.subtrees.items():
            nodes = set(st.node_ids)
            if len(nodes) != len(st.node_ids):
                raise TreeAuditError(f"sub-tree {sid} lists a node twice")
            if nodes & seen:
                raise TreeAuditError(f"sub-tree {sid} shares nodes with another sub-tree")
            seen |= nodes
            roots = [i for i in st.node_ids if self.parent[i] < 0]
            if len(roots) != 1:
                raise TreeAuditError(f"sub-tree {sid} has {len(roots)} roots")
            for i in st.node_ids:
                if not self.alive[i] or self.owner[i] != sid:
                    raise TreeAuditError(f"node {i} of sub-tree {sid} is dead or mis-owned")
                # walk to the root; must stay inside the sub-tree and terminate
                steps, cur = 0, i
                while self.parent[cur] >= 0:
                    cur = int(self.parent[cur])
                    steps += 1
                    if cur not in nodes or steps > len(nodes):
                        raise TreeAuditError(f"sub-tree {sid} is not a connected tree")
            if st.contains_goal and self.goal_node not in nodes:
                raise TreeAuditError(f"goal sub-tree {sid} lost its goal node")
        if seen != set(self.ids().tolist()):
            raise TreeAuditError("alive nodes outside any sub-tree")


def nearest(point, structure) -> tuple[float, int, int]:
    """Nearest node in a rooted tree or a forest as ``(distance, owner, node)``."""
    if isinstance(structure, TimedTree):
        d, node = structure.nearest(point)
        return d, ROOTED_OWNER, node
    return structure.nearest(point)


def meet(rooted: TimedTree, forest: SubTreeForest, grid: OccupancyGrid, meet_radius: float,
         robot_radius: float, exclude=frozenset()) -> MeetEvent | None:
    """Exhaustive search for the closest qualifying pair.

    Rooted/sub-tree pairs win over sub-tree/sub-tree pairs. Within a class the
    closest pair wins, ties by the lowest contact ids. ``exclude`` holds
    contact pairs already processed.
    """
    f_ids = forest.ids()
    if len(f_ids) == 0:
        return None
    fx, fy = forest.xy[f_ids, 0], forest.xy[f_ids, 1]
    r_ids = rooted.ids()
    d = np.hypot(rooted.x[r_ids][:, None] - fx[None, :], rooted.y[r_ids][:, None] - fy[None, :])
    ri, fi = np.nonzero(d <= meet_radius)
    cands = sorted((float(d[a, b]), int(r_ids[a]), int(f_ids[b])) for a, b in zip(ri, fi))
    for dist, rn, fn in cands:
        if ("rooted-subtree", (rn, fn)) in exclude:
            continue
        if segment_free(grid, (rooted.x[rn], rooted.y[rn]), forest.xy[fn], robot_radius):
            return MeetEvent("rooted-subtree", (ROOTED_OWNER, int(forest.owner[fn])), (rn, fn), dist)
    dd = np.hypot(fx[:, None] - fx[None, :], fy[:, None] - fy[None, :])
    own = forest.owner[f_ids]
    ai, bi = np.nonzero((dd <= meet_radius) & (own[:, None] < own[None, :]))
    cands = sorted((float(dd[a, b]), int(f_ids[a]), int(f_ids[b])) for a, b in zip(ai, bi))
    for dist, an, bn in cands:
        if ("subtree-subtree", (an, bn)) in exclude:
            continue
        if segment_free(grid, forest.xy[an], forest.xy[bn], robot_radius):
            return MeetEvent("subtree-subtree", (int(forest.owner[an]), int(forest.owner[bn])), (an, bn), dist)
    return None


@dataclass(frozen=True)
class HeuristicDistribution:
    """Equal-weight mixture of isotropic Gaussians at path nodes, blended with uniform."""

    mus: np.ndarray  # (L, 2)
    sigma: float
    h_r: float
    bounds: tuple[float, float, float, float]

    def __post_init__(self):
        mus = np.asarray(self.mus, dtype=float).reshape(-1, 2)
        if len(mus) == 0:
            raise ContractViolation("heuristic distribution needs at least one component")
        if not self.sigma > 0:
            raise ContractViolation("sigma must be positive")
        if not 0.0 <= self.h_r <= 1.0:
            raise ContractViolation("h_r must lie in [0, 1]")
        object.__setattr__(self, "mus", mus)

    @property
    def L(self) -> int:
        return len(self.mus)


def uniform_sample(bounds, rng: np.random.Generator) -> np.ndarray:
    xmin, ymin, xmax, ymax = bounds
    return np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)])


MAX_REDRAWS = 100


def heuristic_sample(dist: HeuristicDistribution, rng: np.random.Generator,
                     return_branch: bool = False):
    """Draw one point from the mixture.

    With ``h_r`` of 0 or 1 no branch draw is consumed, so ``h_r == 0`` reproduces
    :func:`uniform_sample` on the same stream.
    """
    if dist.h_r <= 0.0:
        gaussian = False
    elif dist.h_r >= 1.0:
        gaussian = True
    else:
        gaussian = bool(rng.random() < dist.h_r)
    if not gaussian:
        p = uniform_sample(dist.bounds, rng)
        return (p, "uniform") if return_branch else p
    xmin, ymin, xmax, ymax = dist.bounds
    for _ in range(MAX_REDRAWS):
        k = int(rng.integers(dist.L))
        p = dist.mus[k] + dist.sigma * rng.standard_normal(2)
        if xmin <= p[0] <= xmax and ymin <= p[1] <= ymax:
            break
    p = np.array([min(max(p[0], xmin), xmax), min(max(p[1], ymin), ymax)])
    return (p, "gaussian") if return_branch else p


def default_sigma_kappa(grid: OccupancyGrid) -> float:
    return 0.02 * grid.size_m[0]
