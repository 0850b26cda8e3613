import numpy as np
import pytest

from augmetry import body, geom, reconfig, srl, workspace
from augmetry.errors import NotFeasible
from augmetry.reconfig import Autonomy, SearchStatus


FIELD = body.VisualField()


def ball(rng, n, center, radius):
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * rng.uniform(0, 1, size=(n, 1)) ** (1 / 3)
    return geom.PointCloud(np.asarray(center) + v * r)


@pytest.fixture(scope="module")
def overlap_dec():
    """Human ball and robot ball overlapping in front: C, E_V both non-empty."""
    rng = np.random.default_rng(0)
    human = ball(rng, 3000, [0.30, 0.0, 0.30], 0.25)
    robot = ball(rng, 3000, [0.55, 0.0, 0.30], 0.22)
    return workspace.decompose(human, robot, FIELD, eps=0.05)


@pytest.fixture(scope="module")
def behind_dec():
    """Robot ball behind the torso, far from the human: pure E_NV."""
    rng = np.random.default_rng(1)
    human = ball(rng, 3000, [0.30, 0.0, 0.30], 0.25)
    robot = ball(rng, 3000, [-0.60, 0.0, 0.30], 0.20)
    return workspace.decompose(human, robot, FIELD, eps=0.05)


def two_module_cfg():
    return srl.SrlConfiguration((srl.strong_module(), srl.strong_module()),
                                srl.default_placements()["p1"])


def task_at(points, name="t", collaborative=False, payload=0.0):
    cloud = geom.PointCloud(np.atleast_2d(points))
    if collaborative:
        return reconfig.TaskSpec(name, collaborative=cloud, payload_g=payload)
    return reconfig.TaskSpec(name, non_collaborative=cloud, payload_g=payload)


# --- regions / task spec -------------------------------------------------------

def test_box_region_deterministic_and_bounded():
    a = reconfig.box_region([0.1, 0.2, 0.3], [0.05, 0.02, 0.01], 64, seed=9)
    b = reconfig.box_region([0.1, 0.2, 0.3], [0.05, 0.02, 0.01], 64, seed=9)
    np.testing.assert_array_equal(a.points, b.points)
    assert len(a) == 64
    assert np.all(np.abs(a.points - [0.1, 0.2, 0.3]) <= [0.05, 0.02, 0.01])


def test_task_spec_needs_points():
    with pytest.raises(ValueError):
        reconfig.TaskSpec("empty")
    with pytest.raises(ValueError):
        task_at([0.1, 0.2, 0.3], payload=-5.0)


# --- feasibility ----------------------------------------------------------------

def test_far_point_infeasible_with_diagnostics(overlap_dec):
    res = reconfig.check_feasibility(task_at([3.0, 0.0, 0.0]), overlap_dec,
                                     two_module_cfg())
    assert not res.feasible
    assert not res.containment_ok
    assert res.violations.get("non_collaborative") == 1
    assert "augmented" in res.violations
    assert "outside workspace" in res.describe()


def test_payload_gates_feasibility(overlap_dec):
    center = overlap_dec.robot.points.mean(axis=0)
    cfg3 = srl.standard_stack(3, srl.default_placements()["p1"])
    heavy = task_at(center, payload=2000.0)
    res = reconfig.check_feasibility(heavy, overlap_dec, cfg3)
    assert res.containment_ok
    assert not res.payload_ok
    assert not res.feasible
    assert res.capacity_g == 300.0
    geo = reconfig.check_feasibility(heavy, overlap_dec, cfg3,
                                     geometric_only=True)
    assert geo.feasible


def test_collaborative_point_must_sit_in_collaborative_region(overlap_dec):
    # centroid of the collaborative cloud is inside its hull
    c_pt = overlap_dec.collaborative.points.mean(axis=0)
    ok = reconfig.check_feasibility(task_at(c_pt, collaborative=True),
                                    overlap_dec, two_module_cfg())
    assert ok.feasible
    # a visible-extended point is not collaborative
    v_pt = overlap_dec.visible_extended.points.max(axis=0)
    bad = reconfig.check_feasibility(task_at(v_pt, collaborative=True),
                                     overlap_dec, two_module_cfg())
    assert not bad.feasible
    assert "collaborative" in bad.violations


# --- autonomy -------------------------------------------------------------------

def test_collaborative_task_selects_manual(overlap_dec):
    c_pt = overlap_dec.collaborative.points.mean(axis=0)
    autonomy, effective = reconfig.select_autonomy(
        task_at(c_pt, collaborative=True), overlap_dec)
    assert autonomy is Autonomy.MANUAL
    assert effective is Autonomy.MANUAL


def test_nonvisible_task_selects_autonomous(behind_dec):
    pt = behind_dec.nonvisible_extended.points.mean(axis=0)
    autonomy, effective = reconfig.select_autonomy(task_at(pt), behind_dec)
    assert autonomy is Autonomy.AUTONOMOUS
    assert effective is Autonomy.AUTONOMOUS


def test_visible_task_is_either_with_bias(overlap_dec):
    pt = overlap_dec.robot.points.mean(axis=0)
    autonomy, effective = reconfig.select_autonomy(task_at(pt), overlap_dec)
    assert autonomy is Autonomy.EITHER
    assert effective is Autonomy.AUTONOMOUS
    _, manual = reconfig.select_autonomy(task_at(pt), overlap_dec,
                                         bias=Autonomy.MANUAL)
    assert manual is Autonomy.MANUAL


def test_autonomy_rejects_infeasible(behind_dec):
    with pytest.raises(NotFeasible):
        reconfig.select_autonomy(task_at([3.0, 0.0, 0.0]), behind_dec)
    with pytest.raises(NotFeasible):
        reconfig.select_autonomy(
            task_at([3.0, 0.0, 0.0], collaborative=True), behind_dec)


def test_autonomy_invariant_under_point_permutation(overlap_dec):
    rng = np.random.default_rng(3)
    pts = overlap_dec.collaborative.points[
        rng.choice(len(overlap_dec.collaborative), size=20, replace=False)]
    base = reconfig.select_autonomy(
        reconfig.TaskSpec("t", collaborative=geom.PointCloud(pts)), overlap_dec)
    for _ in range(3):
        perm = rng.permutation(len(pts))
        shuffled = reconfig.select_autonomy(
            reconfig.TaskSpec("t", collaborative=geom.PointCloud(pts[perm])),
            overlap_dec)
        assert shuffled == base


# --- search ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_ctx():
    return reconfig.PlanningContext(
        body.Anthropometry(), srl.ModuleKinematics(),
        srl.default_placements(), range(1, 4), samples=3000, seed=777,
        reference_samples=30000)


def test_search_orders_by_module_count(small_ctx):
    # A point reachable from the chest with two modules but not one.
    task = task_at([0.33, 0.0, 0.46])
    res = reconfig.search_configurations(task, small_ctx)
    assert res.status is SearchStatus.OK
    assert res.decisions
    ns = [d.n for d in res.decisions]
    assert ns == sorted(ns)
    top = res.decisions[0]
    assert (top.placement_id, top.n) == ("p1", 2)
    header = res.to_csv().splitlines()[0]
    assert header == ("placement,n,autonomy,effective_autonomy,"
                      "capacity_g,capacity_estimated")


def test_search_unreachable_reports_change_position(small_ctx):
    res = reconfig.search_configurations(task_at([2.5, 0.0, 0.3]), small_ctx)
    assert res.status is SearchStatus.CHANGE_POSITION
    assert res.decisions == ()
    assert "change position" in res.rationale_text()


def test_search_deterministic(small_ctx):
    task = task_at([0.33, 0.0, 0.46])
    a = reconfig.search_configurations(task, small_ctx)
    b = reconfig.search_configurations(task, small_ctx)
    assert a.to_csv() == b.to_csv()
