"""Velocity-level QP controller for the modular arm.

Every tick assembles one strictly convex QP over the joint velocities: a
weighted sum of task terms (end-effector orientation/position or a streamed
velocity command) plus a low-weight posture term that keeps the problem
well-posed, subject to loop-closure equalities with drift compensation,
velocity dampers realizing position/velocity/acceleration limits for active
joints and fold-hinge limits for passive ones, and plate-to-plate
self-collision dampers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.transform import Rotation

from .kinematics import KinematicTree
from .qp import QpProblem, QpSolution, solve_qp


@dataclass(frozen=True)
class ControllerParams:
    weight_orientation: float = 10.0
    weight_position: float = 5.0
    weight_velocity: float = 10.0  # streamed manual commands
    weight_posture_active: float = 0.01
    weight_posture_passive: float = 1e-4  # passive joints barely steer posture
    gain_orientation: float = 8.0  # 1/s
    gain_position: float = 5.0
    gain_posture: float = 1.0
    damper_safety: float = 2.0
    collision_margin_m: float = 0.005
    loop_gain: float = 0.1
    velocity_limit_active: float = 3.0  # rad/s
    velocity_limit_passive: float = 10.0
    accel_limit_active: float = 100.0  # rad/s^2
    accel_limit_passive: float = 400.0
    dt: float = 0.01
    qp_tol: float = 1e-8
    qp_max_iter: int = 200


@dataclass(frozen=True)
class ControlState:
    q: np.ndarray
    qdot: np.ndarray
    time: float = 0.0


def orientation_error(current: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Axis-angle error of `current` relative to `target` (log map of
    target^-1 @ current); zero exactly when the rotations agree."""
    return Rotation.from_matrix(target.T @ current).as_rotvec()


class OrientationTask:
    """Drive a body's world orientation toward a fixed target rotation."""

    def __init__(self, body: int, target: np.ndarray, weight: float,
                 gain: float):
        self.body = body
        self.target = np.asarray(target, dtype=float)
        self.weight = weight
        self.gain = gain

    def rows(self, tree: KinematicTree, poses: np.ndarray):
        r_now = poses[self.body, :3, :3]
        err_world = Rotation.from_matrix(r_now @ self.target.T).as_rotvec()
        jac = tree.angular_jacobian(poses, self.body)
        return jac, -self.gain * err_world, self.weight


class PositionTask:
    def __init__(self, body: int, local, target, weight: float, gain: float):
        self.body = body
        self.local = np.asarray(local, dtype=float)
        self.target = np.asarray(target, dtype=float)
        self.weight = weight
        self.gain = gain

    def rows(self, tree: KinematicTree, poses: np.ndarray):
        p = tree.point_world(poses, self.body, self.local)
        jac = tree.point_jacobian(poses, self.body, self.local)
        return jac, -self.gain * (p - self.target), self.weight


class VelocityTask:
    """Track a commanded end-effector twist (manual-control stream)."""

    def __init__(self, body: int, linear, angular, weight: float):
        self.body = body
        self.linear = np.asarray(linear, dtype=float)
        self.angular = np.asarray(angular, dtype=float)
        self.weight = weight

    def rows(self, tree: KinematicTree, poses: np.ndarray):
        jac = np.vstack([tree.point_jacobian(poses, self.body, np.zeros(3)),
                         tree.angular_jacobian(poses, self.body)])
        return jac, np.concatenate([self.linear, self.angular]), self.weight


def build_control_qp(tree: KinematicTree, poses: np.ndarray,
                     state: ControlState, tasks, params: ControllerParams,
                     q_ref: np.ndarray) -> QpProblem:
    """Assemble the per-tick QP for the current kinematic state."""
    nq = tree.n_q
    dt = params.dt
    zeta = params.damper_safety

    posture_w = np.empty(nq)
    posture_w[tree.active_idx] = params.weight_posture_active
    posture_w[tree.passive_idx] = params.weight_posture_passive

    hess = np.diag(posture_w.copy())
    grad = -posture_w * (params.gain_posture * (q_ref - state.q))
    for task in tasks:
        jac, vstar, weight = task.rows(tree, poses)
        hess += weight * jac.T @ jac
        grad -= weight * jac.T @ vstar
    hess = 0.5 * (hess + hess.T)

    eq = tree.loop_jacobian(poses)
    eq_rhs = -(params.loop_gain / dt) * tree.loop_residuals(poses)

    vel_max = np.empty(nq)
    vel_max[tree.active_idx] = params.velocity_limit_active
    vel_max[tree.passive_idx] = params.velocity_limit_passive
    acc_max = np.empty(nq)
    acc_max[tree.active_idx] = params.accel_limit_active
    acc_max[tree.passive_idx] = params.accel_limit_passive

    lo = np.maximum.reduce([
        -vel_max,
        (tree.limits_low - state.q) / (zeta * dt),
        state.qdot - acc_max * dt,
    ])
    up = np.minimum.reduce([
        vel_max,
        (tree.limits_high - state.q) / (zeta * dt),
        state.qdot + acc_max * dt,
    ])
    # Braking to rest is always admissible; this also keeps the box
    # consistent when the acceleration window does not straddle zero.
    lo = np.minimum(lo, 0.0)
    up = np.maximum(up, 0.0)

    rows = [np.eye(nq)]
    row_lo = [lo]
    row_up = [up]

    spheres = tree.collision_spheres()
    for a in range(len(spheres)):
        for b in range(a + 2, len(spheres)):
            body_a, loc_a, r_a = spheres[a]
            body_b, loc_b, r_b = spheres[b]
            pa = tree.point_world(poses, body_a, loc_a)
            pb = tree.point_world(poses, body_b, loc_b)
            delta = pa - pb
            dist = np.linalg.norm(delta)
            if dist < 1e-12:
                continue
            u = delta / dist
            j_rel = tree.point_jacobian(poses, body_a, loc_a) - \
                tree.point_jacobian(poses, body_b, loc_b)
            clearance = dist - (r_a + r_b) - params.collision_margin_m
            rows.append((-u @ j_rel)[None, :])
            row_lo.append(np.array([-np.inf]))
            row_up.append(np.array([clearance / (zeta * dt)]))

    return QpProblem(
        hessian=hess, gradient=grad,
        eq_matrix=eq, eq_rhs=eq_rhs,
        ineq_matrix=np.vstack(rows),
        ineq_lower=np.concatenate(row_lo),
        ineq_upper=np.concatenate(row_up))


def solve_tick(tree: KinematicTree, poses: np.ndarray, state: ControlState,
               tasks, params: ControllerParams,
               q_ref: np.ndarray) -> QpSolution:
    problem = build_control_qp(tree, poses, state, tasks, params, q_ref)
    return solve_qp(problem, tol=params.qp_tol, max_iter=params.qp_max_iter)


def step(tree: KinematicTree, state: ControlState, qdot_cmd: np.ndarray,
         params: ControllerParams) -> ControlState:
    """Ideal rate-limited plant: saturate the commanded velocity, integrate,
    clamp positions to the joint limits."""
    vel_max = np.empty(tree.n_q)
    vel_max[tree.active_idx] = params.velocity_limit_active
    vel_max[tree.passive_idx] = params.velocity_limit_passive
    qdot = np.clip(qdot_cmd, -vel_max, vel_max)
    q = np.clip(state.q + qdot * params.dt, tree.limits_low, tree.limits_high)
    return ControlState(q=q, qdot=qdot, time=state.time + params.dt)
