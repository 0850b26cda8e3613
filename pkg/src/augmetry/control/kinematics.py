"""Kinematic tree of the modular arm for control.

Each module is modeled as the physical linkage: three two-segment legs on a
base plate, every leg driven by one actuated base hinge, with the fold
vertex mid-leg represented as three co-located passive revolute joints.
The distal plate rides on leg 0 through a passive top-fold hinge (the
virtual joint with one free axis); legs 1 and 2 close their chains through
point-contact constraints tying their tips to the plate rim.  Leg geometry
is chosen so the folded/extended plate heights match the module's published
envelope: height(theta) = h0 + 2 s sin(theta).

Passive joint angles are measured from the symmetric reference assembly
(all motors at 45 deg, plate level), so hinge limits are symmetric about
zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InfeasibleStart, JointLimit
from ..srl import ModuleKinematics

REFERENCE_ANGLE = np.radians(45.0)
LEG_AZIMUTHS = np.radians([0.0, 120.0, 240.0])
DEFAULT_HINGE_LIMIT = np.radians(120.0)


def rot_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    k = axis
    c, s = np.cos(angle), np.sin(angle)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return c * np.eye(3) + s * kx + (1 - c) * np.outer(k, k)


def _tf(rotation=None, translation=None) -> np.ndarray:
    t = np.eye(4)
    if rotation is not None:
        t[:3, :3] = rotation
    if translation is not None:
        t[:3, 3] = translation
    return t


def _ry(a):
    return rot_axis(np.array([0.0, 1.0, 0.0]), a)


def _rz(a):
    return rot_axis(np.array([0.0, 0.0, 1.0]), a)


@dataclass(frozen=True)
class BodyDef:
    name: str
    parent: int
    origin: np.ndarray  # fixed transform from parent frame to the joint frame
    axis: np.ndarray | None  # None for a welded body
    q_index: int | None
    kind: str  # "active" | "passive" | "fixed"
    limit_low: float = 0.0
    limit_high: float = 0.0


@dataclass(frozen=True)
class LoopPair:
    """Point-contact closure: `tip_local` on `tip_body` sticks to
    `anchor_local` on `plate_body`."""
    tip_body: int
    tip_local: np.ndarray
    plate_body: int
    anchor_local: np.ndarray
    module: int


@dataclass(frozen=True)
class LegGeometry:
    segment: float  # each leg half length s
    plate_offset: float  # h0: combined plate thickness in the height law
    radius: float  # anchor circle radius

    @classmethod
    def from_module(cls, module: ModuleKinematics) -> "LegGeometry":
        lo, hi = module.limits_rad
        s = (module.max_height_m - module.min_height_m) / (
            2.0 * (np.sin(hi) - np.sin(lo)))
        h0 = module.min_height_m - 2.0 * s * np.sin(lo)
        return cls(segment=s, plate_offset=h0, radius=module.plate_radius_m)


class KinematicTree:
    """Bodies, joints, loop pairs, and collision spheres of an n-module arm."""

    def __init__(self, module: ModuleKinematics, n_modules: int,
                 hinge_limit: float = DEFAULT_HINGE_LIMIT):
        if n_modules < 1:
            raise ValueError("need at least one module")
        self.module = module
        self.n_modules = n_modules
        self.geometry = LegGeometry.from_module(module)
        self.hinge_limit = hinge_limit

        self.bodies: list[BodyDef] = [BodyDef("mount", -1, np.eye(4), None,
                                              None, "fixed")]
        self.loop_pairs: list[LoopPair] = []
        self.plate_bodies: list[int] = [0]
        self._build()

        self.n_q = sum(1 for b in self.bodies if b.q_index is not None)
        self.active_idx = np.array([b.q_index for b in self.bodies
                                    if b.kind == "active"], dtype=int)
        self.passive_idx = np.array([b.q_index for b in self.bodies
                                     if b.kind == "passive"], dtype=int)
        low = np.zeros(self.n_q)
        high = np.zeros(self.n_q)
        for b in self.bodies:
            if b.q_index is not None:
                low[b.q_index] = b.limit_low
                high[b.q_index] = b.limit_high
        self.limits_low, self.limits_high = low, high

        # Per-body chain of jointed ancestors (self included when jointed).
        self._chain: list[list[int]] = []
        for i, b in enumerate(self.bodies):
            chain = list(self._chain[b.parent]) if b.parent >= 0 else []
            if b.q_index is not None:
                chain.append(i)
            self._chain.append(chain)

        # q index of the passive joints of each module (for assembly).
        self.module_passive_idx: list[np.ndarray] = []
        for i in range(n_modules):
            idx = [b.q_index for b in self.bodies
                   if b.kind == "passive" and b.name.startswith(f"m{i}_")]
            self.module_passive_idx.append(np.asarray(idx, dtype=int))

    # -- construction ------------------------------------------------------

    def _add(self, name, parent, origin, axis, kind, lim=None) -> int:
        q_index = None
        if axis is not None:
            q_index = sum(1 for b in self.bodies if b.q_index is not None)
        lo, hi = lim if lim else (0.0, 0.0)
        self.bodies.append(BodyDef(name, parent, origin, axis, q_index, kind,
                                   lo, hi))
        return len(self.bodies) - 1

    def _build(self):
        g = self.geometry
        lo, hi = self.module.limits_rad
        y = np.array([0.0, 1.0, 0.0])
        x = np.array([1.0, 0.0, 0.0])
        z = np.array([0.0, 0.0, 1.0])
        base = 0
        for i in range(self.n_modules):
            plate = None
            tips = []
            for j, phi in enumerate(LEG_AZIMUTHS):
                anchor = np.array([g.radius * np.cos(phi),
                                   g.radius * np.sin(phi), g.plate_offset / 2])
                t_anchor = _tf(_rz(phi), anchor)
                f1 = self._add(f"m{i}_leg{j}_active", base, t_anchor, y,
                               "active", (lo, hi))
                t_elbow = _tf(_ry(np.pi - 2 * REFERENCE_ANGLE), [-g.segment, 0, 0])
                wb1 = self._add(f"m{i}_leg{j}_wb1", f1, t_elbow, y, "passive",
                                (-self.hinge_limit, self.hinge_limit))
                wb2 = self._add(f"m{i}_leg{j}_wb2", wb1, np.eye(4), x, "passive",
                                (-self.hinge_limit, self.hinge_limit))
                f2 = self._add(f"m{i}_leg{j}_wb3", wb2, np.eye(4), z, "passive",
                               (-self.hinge_limit, self.hinge_limit))
                if j == 0:
                    t_top = _tf(_ry(REFERENCE_ANGLE - np.pi), [-g.segment, 0, 0])
                    top = self._add(f"m{i}_topfold", f2, t_top, y, "passive",
                                    (-self.hinge_limit, self.hinge_limit))
                    # Undo the leg azimuth, then step from the rim anchor to
                    # the plate center (plate coords).
                    t_plate = _tf(_rz(-phi)) @ _tf(None, [-g.radius, 0.0,
                                                          g.plate_offset / 2])
                    plate = self._add(f"m{i}_plate", top, t_plate, None, "fixed")
                else:
                    tips.append(f2)
            for j, f2 in zip((1, 2), tips):
                phi = LEG_AZIMUTHS[j]
                anchor_local = np.array([g.radius * np.cos(phi),
                                         g.radius * np.sin(phi),
                                         -g.plate_offset / 2])
                self.loop_pairs.append(LoopPair(
                    tip_body=f2, tip_local=np.array([-g.segment, 0.0, 0.0]),
                    plate_body=plate, anchor_local=anchor_local, module=i))
            self.plate_bodies.append(plate)
            base = plate
        self.ee_body = base

    # -- kinematics ---------------------------------------------------------

    def reference_q(self) -> np.ndarray:
        """Symmetric assembly: motors at the reference angle, passives zero."""
        q = np.zeros(self.n_q)
        q[self.active_idx] = REFERENCE_ANGLE
        return q

    def clamp(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.limits_low, self.limits_high)

    def check_limits(self, q: np.ndarray, tol: float = 1e-9):
        if np.any(q < self.limits_low - tol) or np.any(q > self.limits_high + tol):
            raise JointLimit("joint vector outside limits")

    def fk(self, q: np.ndarray, base_pose: np.ndarray | None = None) -> np.ndarray:
        """World poses of every body; `base_pose` places the mount."""
        poses = np.empty((len(self.bodies), 4, 4))
        poses[0] = np.eye(4) if base_pose is None else base_pose
        for i, b in enumerate(self.bodies):
            if i == 0:
                continue
            t = poses[b.parent] @ b.origin
            if b.axis is not None:
                t = t @ _tf(rot_axis(b.axis, q[b.q_index]))
            poses[i] = t
        return poses

    def body_index(self, name: str) -> int:
        for i, b in enumerate(self.bodies):
            if b.name == name:
                return i
        raise KeyError(name)

    def point_world(self, poses, body: int, local) -> np.ndarray:
        return poses[body, :3, :3] @ np.asarray(local) + poses[body, :3, 3]

    def point_jacobian(self, poses, body: int, local) -> np.ndarray:
        """3 x n_q Jacobian of a body-fixed point's world position."""
        p = self.point_world(poses, body, local)
        jac = np.zeros((3, self.n_q))
        for a in self._chain[body]:
            b = self.bodies[a]
            axis_w = poses[a, :3, :3] @ b.axis
            origin_w = poses[a, :3, 3]
            jac[:, b.q_index] = np.cross(axis_w, p - origin_w)
        return jac

    def angular_jacobian(self, poses, body: int) -> np.ndarray:
        """3 x n_q Jacobian of the body's world angular velocity."""
        jac = np.zeros((3, self.n_q))
        for a in self._chain[body]:
            b = self.bodies[a]
            jac[:, b.q_index] = poses[a, :3, :3] @ b.axis
        return jac

    def loop_residuals(self, poses) -> np.ndarray:
        res = np.empty(3 * len(self.loop_pairs))
        for k, pair in enumerate(self.loop_pairs):
            tip = self.point_world(poses, pair.tip_body, pair.tip_local)
            anchor = self.point_world(poses, pair.plate_body, pair.anchor_local)
            res[3 * k:3 * k + 3] = tip - anchor
        return res

    def loop_jacobian(self, poses) -> np.ndarray:
        jac = np.empty((3 * len(self.loop_pairs), self.n_q))
        for k, pair in enumerate(self.loop_pairs):
            j_tip = self.point_jacobian(poses, pair.tip_body, pair.tip_local)
            j_anchor = self.point_jacobian(poses, pair.plate_body,
                                           pair.anchor_local)
            jac[3 * k:3 * k + 3] = j_tip - j_anchor
        return jac

    def collision_spheres(self) -> list[tuple[int, np.ndarray, float]]:
        """One sphere per plate (mount plus each distal plate)."""
        return [(b, np.zeros(3), self.module.plate_radius_m)
                for b in self.plate_bodies]


def assembly_guess(tree: KinematicTree, q_active: np.ndarray) -> np.ndarray:
    """Analytic passive angles for the symmetric (zero-tilt) closure at each
    module's mean motor angle; exact when the three motors agree."""
    q = np.zeros(tree.n_q)
    q[tree.active_idx] = q_active
    per_module = q_active.reshape(tree.n_modules, 3)
    means = per_module.mean(axis=1)
    for b in tree.bodies:
        if b.kind != "passive":
            continue
        module = int(b.name.split("_")[0][1:])
        if b.name.endswith("wb1"):
            # The elbow fold tracks pi - 2*theta; stored relative to reference.
            leg = int(b.name.split("_")[1][3:])
            theta = per_module[module, leg]
            q[b.q_index] = 2.0 * (REFERENCE_ANGLE - theta)
        elif b.name.endswith("topfold"):
            q[b.q_index] = per_module[module, 0] - REFERENCE_ANGLE
    return q


def assemble_passives(tree: KinematicTree, q_active: np.ndarray,
                      plate_targets: list[np.ndarray] | None = None,
                      base_pose: np.ndarray | None = None,
                      tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    """Solve passive joint angles so every loop closes (and, when targets are
    given, each module's plate matches the requested world orientation).

    Damped least-squares iteration from the analytic symmetric guess, with a
    weak pull toward that guess so the underdetermined directions (leg spins,
    plate float) stay near the nominal fold pattern.  Raises InfeasibleStart
    when the residual cannot be driven to tolerance or the solution leaves
    the hinge limits.
    """
    from scipy.spatial.transform import Rotation

    q = assembly_guess(tree, q_active)
    guess_passive = q[tree.passive_idx].copy()
    base = np.eye(4) if base_pose is None else base_pose
    max_step = 0.3  # rad, per-iteration cap

    res = None
    for _ in range(max_iter):
        poses = tree.fk(q, base)
        res_parts = [tree.loop_residuals(poses)]
        jac_parts = [tree.loop_jacobian(poses)[:, tree.passive_idx]]
        if plate_targets is not None:
            for i, target in enumerate(plate_targets):
                body = tree.plate_bodies[i + 1]
                r_err = Rotation.from_matrix(
                    poses[body, :3, :3] @ target.T).as_rotvec()
                res_parts.append(r_err)
                jac_parts.append(
                    tree.angular_jacobian(poses, body)[:, tree.passive_idx])
        res = np.concatenate(res_parts)
        res_norm = np.linalg.norm(res, ord=np.inf)
        if res_norm < tol:
            break
        # Pull-to-guess weight decays with the residual so it steers the
        # underdetermined directions early without biasing convergence.
        soft = min(1e-3, 0.1 * res_norm)
        res_soft = np.concatenate(
            [res, soft * (q[tree.passive_idx] - guess_passive)])
        jac_soft = np.vstack(jac_parts + [soft * np.eye(len(tree.passive_idx))])
        dq, *_ = np.linalg.lstsq(jac_soft, -res_soft, rcond=None)
        norm = np.linalg.norm(dq, ord=np.inf)
        if norm > max_step:
            dq *= max_step / norm
        q[tree.passive_idx] += dq
    else:
        raise InfeasibleStart(
            f"assembly did not converge: residual {np.linalg.norm(res):.3g}")

    if np.any(q < tree.limits_low - 1e-9) or np.any(q > tree.limits_high + 1e-9):
        raise InfeasibleStart("assembled pose violates joint limits")
    return q
