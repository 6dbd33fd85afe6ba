import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_grid
from riskplan.forest import (
    ROOTED_OWNER,
    HeuristicDistribution,
    SubTreeForest,
    heuristic_sample,
    meet,
    nearest,
    uniform_sample,
)
from riskplan.kinematics import RobotState
from riskplan.timed_tree import TimedTree
from riskplan.world import ContractViolation

FREE = make_grid(40, 40, 0.5)  # 20 m square
WALL = make_grid(40, 40, 0.5, occupied=[(20, r) for r in range(40)])  # x in [10, 10.5]


def test_new_subtrees():
    f = SubTreeForest()
    sid = f.add_tree((5, 5))
    assert len(f.subtrees[sid]) == 1 and not f.subtrees[sid].contains_goal
    g = f.add_tree((9, 9), contains_goal=True)
    assert f.subtrees[g].contains_goal and f.goal_tree == g
    f.audit()


def test_nearest_examples():
    f = SubTreeForest()
    f.add_tree((0, 0))
    assert nearest((3, 4), f)[0] == 5.0
    b = f.add_tree((1, 0))
    d, owner, node = nearest((0.9, 0), f)
    assert owner == b
    tree = TimedTree(RobotState(2, 2))
    assert nearest((2, 3), tree) == (1.0, ROOTED_OWNER, tree.root)
    with pytest.raises(ContractViolation):
        SubTreeForest().nearest((0, 0))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_nearest_matches_linear_scan(seed):
    rng = np.random.default_rng(seed)
    f = SubTreeForest()
    pts = np.round(rng.uniform(0, 10, size=(100, 2)), 1)  # coarse values force ties
    for p in pts:
        f.add_tree(p)
    q = rng.uniform(0, 10, size=2)
    # same distance routine as the forest, so exact ties are judged identically
    best = min((float(np.hypot(*(p - q))), i, i) for i, p in enumerate(pts))
    d, owner, node = f.nearest(q)
    assert (d, owner, node) == (best[0], best[1], best[2])


def test_grow_subtree_respects_walls():
    f = SubTreeForest()
    sid = f.add_tree((5, 5))
    node = f.grow_subtree(sid, (7, 5), FREE, 0.3)
    assert node is not None and f.parent[node] == f.root_of(sid)
    f2 = SubTreeForest()
    sid2 = f2.add_tree((8, 5))
    assert f2.grow_subtree(sid2, (13, 5), WALL, 0.3) is None
    assert f2.node_count == 1
    f.audit()
    f2.audit()


def test_meet_examples():
    tree = TimedTree(RobotState(0.5, 0.5))
    f = SubTreeForest()
    f.add_tree((1.5, 0.5))
    ev = meet(tree, f, FREE, 1.5, 0.3)
    assert ev.kind == "rooted-subtree" and ev.distance == pytest.approx(1.0)

    tree = TimedTree(RobotState(1, 1))
    f = SubTreeForest()
    a = f.add_tree((15, 15))
    b = f.add_tree((16, 15))
    ev = meet(tree, f, FREE, 1.5, 0.3)
    assert ev.kind == "subtree-subtree" and ev.ids == (a, b)

    tree = TimedTree(RobotState(9.5, 5))
    f = SubTreeForest()
    f.add_tree((11.5, 5))
    assert meet(tree, f, WALL, 3.0, 0.3) is None


def test_merge_conserves_nodes_and_goal_flag():
    f = SubTreeForest()
    a = f.add_tree((2, 2))
    for p in [(3, 2), (4, 2)]:
        f.grow_subtree(a, p, FREE, 0.3)
    g = f.add_tree((6, 2), contains_goal=True)
    for p in [(7, 2), (8, 2), (6, 3)]:
        f.grow_subtree(g, p, FREE, 0.3)
    total = f.node_count
    contact_a = f.subtrees[a].node_ids[-1]
    contact_g = f.subtrees[g].node_ids[0]
    f.merge_subtrees(a, g, (contact_a, contact_g))
    assert len(f) == 1 and len(f.subtrees[a]) == 7 and f.node_count == total
    assert f.subtrees[a].contains_goal
    f.audit()
    with pytest.raises(ContractViolation):
        f.merge_subtrees(a, a, (contact_a, contact_a))


def test_heuristic_path_shapes():
    f = SubTreeForest()
    g = f.add_tree((10, 10), contains_goal=True)
    n1 = f.grow_subtree(g, (11, 10), FREE, 0.3)
    n2 = f.grow_subtree(g, (12, 10), FREE, 0.3)
    f.grow_subtree(g, (10, 11), FREE, 0.3)  # side branch, not on the path
    path = f.extract_heuristic_path(g, n2)
    assert path.tolist() == [[10, 10], [11, 10], [12, 10]]
    s = f.add_tree((2, 2))
    for p in [(3, 2), (4, 2), (2, 3), (2, 4)]:
        f.grow_subtree(s, p, FREE, 0.3)
    assert len(f.extract_heuristic_path(s, f.subtrees[s].node_ids[2])) == 5
    one = f.add_tree((15, 15))
    assert len(f.extract_heuristic_path(one, f.subtrees[one].node_ids[0])) == 1
    with pytest.raises(ContractViolation):
        f.extract_heuristic_path(one, n1)


def test_goal_path_after_merge_reroot():
    # goal tree absorbed into a plain tree: path still runs goal -> contact
    f = SubTreeForest()
    a = f.add_tree((2, 2))
    ca = f.grow_subtree(a, (4, 2), FREE, 0.3)
    g = f.add_tree((8, 2), contains_goal=True)
    cg = f.grow_subtree(g, (6, 2), FREE, 0.3)
    f.merge_subtrees(a, g, (ca, cg))
    root = f.subtrees[a].node_ids[0]
    assert f.extract_heuristic_path(a, root).tolist() == [[8, 2], [6, 2], [4, 2], [2, 2]]


def test_consume():
    f = SubTreeForest()
    s = f.add_tree((2, 2))
    g = f.add_tree((9, 9), contains_goal=True)
    assert f.consume(s) and len(f) == 1
    assert not f.consume(g, retain_goal_tree=True) and len(f) == 1
    assert f.consume(g) and len(f) == 0 and f.goal_node is None


def test_consumed_ids_never_meet_again():
    tree = TimedTree(RobotState(1, 1))
    f = SubTreeForest()
    s = f.add_tree((2, 1))
    ev = meet(tree, f, FREE, 1.5, 0.3)
    assert ev.ids == (ROOTED_OWNER, s)
    f.consume(s)
    assert meet(tree, f, FREE, 1.5, 0.3) is None


def mixture(h_r, mus=((10.0, 10.0),), sigma=1.0):
    return HeuristicDistribution(np.array(mus), sigma, h_r, (0.0, 0.0, 43.2, 43.2))


@pytest.mark.parametrize("h_r", [0.3, 0.7])
def test_branch_frequency(h_r):
    rng = np.random.default_rng(0)
    dist = mixture(h_r)
    hits = sum(heuristic_sample(dist, rng, return_branch=True)[1] == "gaussian" for _ in range(10_000))
    assert abs(hits / 10_000 - h_r) <= 0.05


def test_zero_ratio_reproduces_uniform_stream():
    a, b = np.random.default_rng(5), np.random.default_rng(5)
    dist = mixture(0.0)
    for _ in range(500):
        assert np.array_equal(heuristic_sample(dist, a), uniform_sample(dist.bounds, b))


def test_point_mass_limit():
    rng = np.random.default_rng(1)
    dist = mixture(1.0, mus=((3.0, 4.0),), sigma=1e-6)
    for _ in range(100):
        assert np.hypot(*(heuristic_sample(dist, rng) - (3, 4))) < 1e-4


def test_samples_clamped_to_bounds():
    rng = np.random.default_rng(2)
    dist = mixture(1.0, mus=((0.0, 0.0),), sigma=50.0)
    for _ in range(200):
        p = heuristic_sample(dist, rng)
        assert 0 <= p[0] <= 43.2 and 0 <= p[1] <= 43.2


def test_mixture_reaches_a_far_patch():
    rng = np.random.default_rng(3)
    dist = mixture(0.7, mus=((5.0, 5.0),), sigma=0.8)
    pts = np.array([heuristic_sample(dist, rng) for _ in range(100_000)])
    inside = (pts[:, 0] >= 30) & (pts[:, 0] <= 31) & (pts[:, 1] >= 30) & (pts[:, 1] <= 31)
    assert inside.any()


def test_distribution_contract():
    with pytest.raises(ContractViolation):
        HeuristicDistribution(np.zeros((0, 2)), 1.0, 0.5, (0, 0, 1, 1))
    with pytest.raises(ContractViolation):
        mixture(0.5, sigma=0.0)
    assert mixture(0.5, mus=((1, 1), (2, 2), (3, 3))).L == 3
