import numpy as np
import pytest

from augmetry import body, geom, srl, workspace
from augmetry.errors import DegenerateHuman, DegenerateRobot


ANTHRO = body.Anthropometry()
FIELD = body.VisualField()


def ball_cloud(rng, n, center, radius):
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * rng.uniform(0, 1, size=(n, 1)) ** (1 / 3)
    return geom.PointCloud(np.asarray(center) + v * r)


def test_robot_equals_human_is_all_collaborative():
    rng = np.random.default_rng(0)
    h = ball_cloud(rng, 500, [0.3, 0.0, 0.3], 0.2)
    dec = workspace.decompose(h, h, FIELD, eps=1e-6)
    assert len(dec.collaborative) == len(h)
    assert len(dec.visible_extended) == 0
    assert len(dec.nonvisible_extended) == 0
    w = workspace.workspace_ratios(dec)
    assert w == (1.0, 0.0, 0.0)
    r_e, r_ev, r_c = workspace.augmentation_ratios(dec)
    assert r_e == pytest.approx(1.0, abs=1e-12)
    assert r_c == pytest.approx(1.0, abs=1e-12)


def test_far_nonvisible_robot_is_all_nonvisible():
    rng = np.random.default_rng(1)
    h = ball_cloud(rng, 500, [0.3, 0.0, 0.3], 0.2)
    r = ball_cloud(rng, 400, [-1.5, 0.0, 0.3], 0.2)  # behind, >eps away
    dec = workspace.decompose(h, r, FIELD, eps=0.05)
    assert len(dec.nonvisible_extended) == len(r)
    assert len(dec.collaborative) == 0
    assert len(dec.visible_extended) == 0
    w = workspace.workspace_ratios(dec)
    assert w == (0.0, 0.0, 1.0)


def test_empty_robot_gives_unit_ratios():
    rng = np.random.default_rng(2)
    h = ball_cloud(rng, 500, [0.3, 0.0, 0.3], 0.2)
    r = geom.PointCloud(np.zeros((0, 3)))
    dec = workspace.decompose(h, r, FIELD, eps=0.05)
    r_e, r_ev, r_c = workspace.augmentation_ratios(dec)
    assert r_e == pytest.approx(1.0, abs=1e-12)
    assert r_ev == pytest.approx(1.0, abs=1e-12)
    assert r_c == 0.0
    with pytest.raises(DegenerateRobot):
        workspace.workspace_ratios(dec)


def test_partition_is_exact():
    rng = np.random.default_rng(3)
    h = ball_cloud(rng, 800, [0.2, 0.0, 0.3], 0.25)
    r = ball_cloud(rng, 800, [0.05, 0.0, 0.3], 0.35)
    dec = workspace.decompose(h, r, FIELD, eps=0.04)
    n = (len(dec.collaborative) + len(dec.visible_extended)
         + len(dec.nonvisible_extended))
    assert n == len(r)
    all_pts = np.vstack([dec.collaborative.points, dec.visible_extended.points,
                         dec.nonvisible_extended.points])
    assert {tuple(p) for p in all_pts} == {tuple(p) for p in r.points}
    # components classify correctly against their definitions
    if len(dec.visible_extended):
        assert FIELD.visible_mask(dec.visible_extended.points).all()
    if len(dec.nonvisible_extended):
        assert not FIELD.visible_mask(dec.nonvisible_extended.points).any()


def test_workspace_ratio_normalization():
    rng = np.random.default_rng(4)
    h = ball_cloud(rng, 600, [0.2, 0.0, 0.3], 0.25)
    r = ball_cloud(rng, 600, [0.15, 0.0, 0.35], 0.4)
    dec = workspace.decompose(h, r, FIELD, eps=0.05)
    w = workspace.workspace_ratios(dec)
    assert abs(sum(w) - 1.0) <= 1e-9
    assert all(x >= 0 for x in w)


def test_degenerate_human_raises():
    rng = np.random.default_rng(5)
    r = ball_cloud(rng, 100, [0.3, 0.0, 0.3], 0.2)
    flat = geom.PointCloud(np.column_stack([np.linspace(0, 1, 10),
                                            np.zeros(10), np.zeros(10)]))
    dec = workspace.decompose(flat, r, FIELD, eps=0.05)
    with pytest.raises(DegenerateHuman):
        workspace.augmentation_ratios(dec)


def small_sweep(seed=77, threads=None):
    placements = [srl.default_placements()["p1"], srl.default_placements()["p3"]]
    return workspace.sweep(ANTHRO, srl.ModuleKinematics(), placements,
                           range(1, 4), samples=2000, seed=seed,
                           reference_samples=20000, threads=threads)


def test_sweep_determinism_and_csv():
    rep1 = small_sweep()
    rep2 = small_sweep()
    assert rep1 == rep2
    assert rep1.to_csv() == rep2.to_csv()
    header = rep1.to_csv().splitlines()[0]
    assert header == "placement,n,r_e,r_ev,r_c,w_C,w_EV,w_ENV,vol_H,vol_R,eps"
    assert len(rep1.cells) == 6
    assert small_sweep(seed=78) != rep1


def test_sweep_threaded_matches_serial():
    assert small_sweep(threads=4) == small_sweep(threads=1)


def test_sweep_cell_invariants():
    rep = small_sweep()
    for c in rep.cells:
        assert c.extension_ratio >= c.visible_extension_ratio >= 1.0 - 1e-12
        assert 0.0 <= c.collaboration_ratio <= c.extension_ratio
        assert abs(c.w_collaborative + c.w_visible + c.w_nonvisible - 1.0) <= 1e-9
        assert c.eps >= c.eps_robot > 0
        assert c.eps_human > 0


def test_reach_monotone_in_module_count():
    p1 = srl.default_placements()["p1"]
    prev = 0.0
    for n in range(1, 7):
        cfg = srl.uniform_stack(n, p1)
        cloud = srl.sample_srl_workspace(cfg, 4000, seed=11)
        reach = np.linalg.norm(cloud.points - p1.position, axis=1).max()
        assert reach >= prev - 1e-12
        prev = reach


def test_human_coverage_eps_positive_and_stable():
    h = body.sample_human_workspace(ANTHRO, 4000, seed=1)
    e1 = workspace.human_coverage_eps(ANTHRO, h, seed=2, probe_samples=20000)
    e2 = workspace.human_coverage_eps(ANTHRO, h, seed=2, probe_samples=20000)
    assert e1 == e2
    assert 0.005 < e1 < 0.2
