import numpy as np
import pytest

from conftest import make_grid
from riskplan.kinematics import ControlInput, PlannerParams, RobotState, step_kinematics
from riskplan.timed_tree import TimedTree, TreeAuditError
from riskplan.world import ContractViolation, MovingObstacle, RiskField, predict_obstacles

DT = 0.5
U = ControlInput(0.5, 0.0)


def child(tree, parent, risk=0.0, u=U, max_depth=10):
    s = step_kinematics(tree.state(parent), u, DT)
    return tree.add_node(parent, s, u, risk, max_depth)


def chain(n, start=RobotState(0, 0, 0)):
    tree = TimedTree(start)
    ids = [tree.root]
    for _ in range(n):
        ids.append(child(tree, ids[-1]))
    return tree, ids


def traversal_count(tree, node):
    # independent of TimedTree.subtree: scan parent links
    members = {node}
    changed = True
    while changed:
        changed = False
        for i in tree.ids().tolist():
            if i not in members and int(tree.parent[i]) in members:
                members.add(i)
                changed = True
    return len(members)


def test_add_node_path_risk():
    tree = TimedTree(RobotState(0, 0, 0))
    a = child(tree, tree.root, 0.0)
    assert tree.node(a).path_risk == 0.0
    b = child(tree, tree.root, 0.5)
    c = child(tree, b, 0.5)
    assert tree.node(c).path_risk == pytest.approx(0.75)
    tree.audit(DT, 10)


def test_depth_cap_rejects():
    tree, ids = chain(3)
    assert child(tree, ids[-1], max_depth=3) is None
    assert len(tree) == 4


def test_prune_keeps_executed_subtree():
    tree = TimedTree(RobotState(0, 0, 0))
    a = child(tree, tree.root)
    b = child(tree, tree.root, u=ControlInput(0.5, 0.2))
    a1 = child(tree, a)
    child(tree, b)
    tree.prune_unreachable(a)
    assert tree.root == a and tree.node(a).depth == 0
    assert sorted(tree.ids().tolist()) == [a, a1]
    assert tree.node(a1).depth == 1
    tree.audit(DT, 10)


def test_prune_size_matches_traversal_oracle():
    tree = TimedTree(RobotState(0, 0, 0))
    a = child(tree, tree.root)
    x = child(tree, a)
    child(tree, x)
    child(tree, a, u=ControlInput(0.5, 0.1))
    child(tree, x, u=ControlInput(0.5, -0.1))
    assert traversal_count(tree, a) == 5
    tree.prune_unreachable(a)
    assert len(tree) == 5


def test_prune_rejects_non_child():
    tree, ids = chain(2)
    with pytest.raises(ContractViolation):
        tree.prune_unreachable(ids[2])
    with pytest.raises(ContractViolation):
        tree.prune_unreachable(tree.root)


def test_prune_lowers_every_depth_by_one():
    tree, ids = chain(5)
    before = {i: int(tree.depth[i]) for i in ids[1:]}
    tree.prune_unreachable(ids[1])
    for i, d in before.items():
        assert tree.depth[i] == d - 1


def test_refresh_without_obstacles_changes_nothing():
    tree, ids = chain(4)
    field = RiskField(make_grid(40, 40), 0.3)
    assert tree.refresh_risks(field, 0.8) == 0
    assert (tree.step_risk[tree.ids()] == 0).all()


def test_refresh_removes_threatened_branch_and_is_idempotent():
    tree, ids = chain(4)
    # an obstacle crossing the chain, passing node 2 exactly at node 2's time
    target = tree.state(ids[2])
    ob = MovingObstacle.from_samples("o", 0.3, [(-1.0, target.x, target.y - 10.0),
                                                (0.0, target.x, target.y - 5.0)])
    p = PlannerParams(N=10)
    field = RiskField(make_grid(40, 40), 0.3, predict_obstacles([ob], 0.0, p), 0.0, DT)
    removed = tree.refresh_risks(field, 0.8)
    assert ids[2] not in tree and ids[4] not in tree and ids[1] in tree
    assert removed == 3
    snap = (tree.ids().copy(), tree.step_risk.copy(), tree.path_risk.copy())
    assert tree.refresh_risks(field, 0.8) == 0
    assert np.array_equal(snap[0], tree.ids())
    assert np.array_equal(snap[2], tree.path_risk)
    tree.audit(DT, 10)


def test_choose_best_examples():
    tree, ids = chain(4)
    traj = tree.choose_best_trajectory((10.0, 0.0))
    assert traj.leaf == ids[-1] and traj.node_ids == tuple(ids[1:])
    assert all(c == U for c in traj.controls)

    tree = TimedTree(RobotState(0, 0, 0))
    up = child(tree, tree.root, 0.4, u=ControlInput(0.5, 0.5))
    down = child(tree, tree.root, 0.1, u=ControlInput(0.5, -0.5))
    assert tree.choose_best_trajectory((10.0, 0.0)).leaf == down
    assert tree.x[up] == pytest.approx(tree.x[down])

    tree = TimedTree(RobotState(0, 0, 0))
    child(tree, tree.root, 0.6)
    assert tree.choose_best_trajectory((1.0, 0.0)) is None


def test_audit_detects_broken_recurrence():
    tree, ids = chain(2)
    tree.path_risk[ids[2]] = 0.3
    with pytest.raises(TreeAuditError):
        tree.audit(DT, 10)
    tree, ids = chain(2)
    tree.t[ids[1]] += 0.1
    with pytest.raises(TreeAuditError):
        tree.audit(DT, 10)


def test_export_csv_lists_alive_nodes():
    tree, ids = chain(2)
    lines = tree.export_csv().splitlines()
    assert lines[0] == "id,x,y,t,depth,parent"
    assert len(lines) == 4 and lines[1].endswith(",0,")
