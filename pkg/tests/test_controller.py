import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from augmetry.srl import ModuleKinematics
from augmetry.control import controller as ctl
from augmetry.control import kinematics as kin
from augmetry.control.qp import solve_qp


MOD = ModuleKinematics()


def assembled_tree(n=2):
    tree = kin.KinematicTree(MOD, n)
    q = kin.assemble_passives(tree, np.full(3 * n, np.radians(45.0)))
    return tree, q


# --- orientation error ---------------------------------------------------------

def test_orientation_error_zero_for_equal_rotations():
    r = Rotation.from_euler("xyz", [0.3, -0.5, 1.0]).as_matrix()
    np.testing.assert_allclose(ctl.orientation_error(r, r), np.zeros(3),
                               atol=1e-15)


def test_orientation_error_quarter_turn():
    r90 = Rotation.from_euler("x", 90, degrees=True).as_matrix()
    err = ctl.orientation_error(r90, np.eye(3))
    assert np.linalg.norm(err) == pytest.approx(np.pi / 2, abs=1e-12)
    np.testing.assert_allclose(err / np.linalg.norm(err), [1, 0, 0], atol=1e-12)


def test_orientation_error_roundtrip():
    rng = np.random.default_rng(0)
    for _ in range(20):
        r1 = Rotation.random(random_state=rng).as_matrix()
        r2 = Rotation.random(random_state=rng).as_matrix()
        err = ctl.orientation_error(r1, r2)
        rebuilt = r2 @ Rotation.from_rotvec(err).as_matrix()
        np.testing.assert_allclose(rebuilt, r1, atol=1e-10)


# --- QP assembly ----------------------------------------------------------------

def test_stationary_at_posture_reference():
    tree, q = assembled_tree()
    poses = tree.fk(q)
    state = ctl.ControlState(q=q, qdot=np.zeros(tree.n_q))
    params = ctl.ControllerParams()
    problem = ctl.build_control_qp(tree, poses, state, [], params, q_ref=q)
    sol = solve_qp(problem)
    assert sol.ok
    np.testing.assert_allclose(sol.x, np.zeros(tree.n_q), atol=1e-9)


def test_redundant_task_matches_pseudoinverse():
    # Unconstrained, the task term dominates: J qdot must reproduce the
    # commanded twist like the least-norm pseudoinverse solution does.
    tree, q = assembled_tree()
    poses = tree.fk(q)
    jac = tree.angular_jacobian(poses, tree.ee_body)
    v_star = np.array([0.2, -0.1, 0.15])
    weight = 10.0
    posture = 1e-6
    hess = weight * jac.T @ jac + posture * np.eye(tree.n_q)
    grad = -weight * jac.T @ v_star
    from augmetry.control.qp import QpProblem
    sol = solve_qp(QpProblem(hessian=0.5 * (hess + hess.T), gradient=grad))
    assert sol.ok
    np.testing.assert_allclose(jac @ sol.x, v_star, atol=1e-6)
    oracle = np.linalg.pinv(jac) @ v_star
    np.testing.assert_allclose(jac @ oracle, v_star, atol=1e-12)
    np.testing.assert_allclose(jac @ sol.x, jac @ oracle, atol=1e-6)


def test_damper_blocks_outward_motion_at_limit():
    tree, q = assembled_tree()
    j = tree.active_idx[0]
    q = q.copy()
    q[j] = tree.limits_high[j]  # motor parked at 85 deg
    poses = tree.fk(q)
    state = ctl.ControlState(q=q, qdot=np.zeros(tree.n_q))
    params = ctl.ControllerParams()
    q_ref = q.copy()
    q_ref[j] = tree.limits_high[j] + 0.5  # posture pulls outward
    problem = ctl.build_control_qp(tree, poses, state, [], params, q_ref=q_ref)
    sol = solve_qp(problem)
    assert sol.ok
    assert sol.x[j] <= 1e-10


def test_qp_structure():
    tree, q = assembled_tree()
    poses = tree.fk(q)
    state = ctl.ControlState(q=q, qdot=np.zeros(tree.n_q))
    params = ctl.ControllerParams()
    task = ctl.OrientationTask(tree.ee_body, np.eye(3),
                               params.weight_orientation,
                               params.gain_orientation)
    problem = ctl.build_control_qp(tree, poses, state, [task], params, q_ref=q)
    # loop rows: 3 per point contact
    assert problem.eq_matrix.shape == (3 * len(tree.loop_pairs), tree.n_q)
    # box rows plus one row per non-adjacent plate pair (n=2 -> 1 pair)
    assert problem.ineq_matrix.shape[0] == tree.n_q + 1
    assert np.all(problem.ineq_lower <= problem.ineq_upper)


def test_velocity_task_rows():
    tree, q = assembled_tree()
    poses = tree.fk(q)
    task = ctl.VelocityTask(tree.ee_body, [0.01, 0, 0], [0, 0, 0.1], 5.0)
    jac, v, w = task.rows(tree, poses)
    assert jac.shape == (6, tree.n_q)
    np.testing.assert_allclose(v, [0.01, 0, 0, 0, 0, 0.1])
    assert w == 5.0


# --- plant ----------------------------------------------------------------------

def test_step_zero_command_keeps_state():
    tree, q = assembled_tree()
    params = ctl.ControllerParams()
    state = ctl.ControlState(q=q, qdot=np.zeros(tree.n_q))
    nxt = ctl.step(tree, state, np.zeros(tree.n_q), params)
    np.testing.assert_array_equal(nxt.q, q)
    assert nxt.time == pytest.approx(params.dt)


def test_step_saturates_velocity():
    tree, q = assembled_tree()
    params = ctl.ControllerParams()
    cmd = np.zeros(tree.n_q)
    j = tree.active_idx[0]
    cmd[j] = 100.0
    nxt = ctl.step(tree, ctl.ControlState(q=q, qdot=np.zeros(tree.n_q)),
                   cmd, params)
    assert nxt.qdot[j] == params.velocity_limit_active
    assert nxt.q[j] == pytest.approx(
        min(q[j] + params.velocity_limit_active * params.dt,
            tree.limits_high[j]))


def test_step_integrates_and_clamps():
    tree, q0 = assembled_tree()
    params = ctl.ControllerParams()
    j = tree.active_idx[1]
    cmd = np.zeros(tree.n_q)
    cmd[j] = 1.0
    state = ctl.ControlState(q=q0, qdot=np.zeros(tree.n_q))
    for k in range(5):
        state = ctl.step(tree, state, cmd, params)
    expected = min(q0[j] + 5 * 1.0 * params.dt, tree.limits_high[j])
    assert state.q[j] == pytest.approx(expected, abs=1e-12)
    # drive into the limit: position never exceeds it
    for k in range(2000):
        state = ctl.step(tree, state, cmd, params)
    assert state.q[j] <= tree.limits_high[j] + 1e-9
