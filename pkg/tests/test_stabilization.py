import numpy as np
import pytest

from augmetry.errors import InfeasibleStart
from augmetry.srl import ModuleKinematics
from augmetry.control import stabilization as stab


MOD = ModuleKinematics()


def short_profile():
    # reach +40 deg pitch quickly, hold, return
    return stab.DisturbanceTrajectory(
        times=np.array([0.0, 1.0, 3.0, 6.0, 8.0, 10.0]),
        roll_deg=np.zeros(6),
        pitch_deg=np.array([0.0, 0.0, 40.0, 40.0, 0.0, 0.0]))


def test_profile_validation():
    with pytest.raises(ValueError):
        stab.DisturbanceTrajectory(np.array([0.0, 1.0]), np.array([0.0, 70.0]),
                                   np.zeros(2))
    with pytest.raises(ValueError):
        stab.DisturbanceTrajectory(np.array([0.0, 0.0]), np.zeros(2), np.zeros(2))


def test_profile_csv_roundtrip():
    p = short_profile()
    text = p.to_csv()
    q = stab.DisturbanceTrajectory.from_csv(text)
    np.testing.assert_allclose(q.times, p.times)
    np.testing.assert_allclose(q.pitch_deg, p.pitch_deg)
    assert q.interpolation == "linear"
    assert text.splitlines()[0] == "t,roll_deg,pitch_deg"


def test_default_profile_shape():
    p = stab.default_profile(60.0)
    assert p.duration == 60.0
    # ramps are smooth: cosine easing has zero slope at the keyframes
    r0, p0 = p.value(5.0)
    r1, p1 = p.value(5.01)
    assert abs(p1 - p0) < 0.05  # much smaller than linear 40/2 deg/s step
    peak = max(abs(p.value(t)[1]) for t in np.linspace(0, 60, 601))
    assert peak == pytest.approx(40.0, abs=1e-9)


def test_zero_disturbance_regulation():
    rep = stab.run_stabilization(MOD, 2, stab.zero_profile(2.0), duration=2.0)
    late = rep.times >= 1.0
    assert np.abs(rep.roll_err_deg[late]).max() < 0.1
    assert np.abs(rep.pitch_err_deg[late]).max() < 0.1
    assert rep.infeasible_ticks == 0


def test_controller_off_tracks_torso():
    rep = stab.run_stabilization(MOD, 2, short_profile(), duration=10.0,
                                 controller_on=False)
    s = rep.summary()
    assert s["pitch"]["max_abs_deg"] == pytest.approx(40.0, abs=2.0)
    assert s["roll"]["max_abs_deg"] < 2.0


def test_closed_loop_short_run_bounds_and_drift():
    rep = stab.run_stabilization(MOD, 2, short_profile(), duration=10.0)
    s = rep.summary()
    assert s["pitch"]["max_abs_deg"] <= 18.0
    assert s["roll"]["max_abs_deg"] <= 27.0
    assert s["loop_drift_max_m"] < 1e-3
    assert rep.infeasible_ticks == 0


def test_run_determinism():
    a = stab.run_stabilization(MOD, 2, short_profile(), duration=4.0)
    b = stab.run_stabilization(MOD, 2, short_profile(), duration=4.0)
    assert a.to_csv() == b.to_csv()
    assert a.summary_json() == b.summary_json()


def test_infeasible_start_raises():
    with pytest.raises(InfeasibleStart):
        stab.run_stabilization(MOD, 2, stab.zero_profile(1.0), duration=1.0,
                               hinge_limit_deg=1.0)


def test_command_stream_moves_end_effector():
    # constant downward velocity command, no orientation disturbance
    stream = np.array([[0.0, 0.0, 0.0, -0.02, 0.0, 0.0, 0.0]])
    rep = stab.run_stabilization(MOD, 2, stab.zero_profile(2.0), duration=2.0,
                                 command_stream=stream)
    # orientation stays level while the stream pushes the tip
    assert np.abs(rep.roll_err_deg).max() < 1.0
    assert rep.infeasible_ticks == 0


def test_report_csv_format():
    rep = stab.run_stabilization(MOD, 1, stab.zero_profile(0.5), duration=0.5)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "t,roll_err_deg,pitch_err_deg"
    assert len(lines) == 1 + 50
    js = rep.summary()
    assert set(js) == {"roll", "pitch", "infeasible_ticks", "controller_on",
                       "loop_drift_max_m"}
