"""End-effector stabilization harness.

Simulates a wearer tilting their torso while the controller keeps the last
plate level with the ground.  The torso rotates about the pelvis origin;
the arm's mount rides on the torso, the plant integrates the QP's joint
velocities, and the report collects the roll/pitch error of the plate
against the world frame fixed at the start.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from ..errors import InfeasibleStart
from ..srl import ModuleKinematics, Placement, frame_from_z
from . import controller as ctl
from .kinematics import KinematicTree, assemble_passives

MAX_TILT_DEG = 60.0


@dataclass(frozen=True)
class DisturbanceTrajectory:
    """Torso roll/pitch keyframes (deg).  `cosine` interpolation eases
    between holds (smooth ramps); `linear` replays sampled data."""

    times: np.ndarray
    roll_deg: np.ndarray
    pitch_deg: np.ndarray
    interpolation: str = "cosine"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        r = np.asarray(self.roll_deg, dtype=float)
        p = np.asarray(self.pitch_deg, dtype=float)
        if not (len(t) == len(r) == len(p)) or len(t) < 2:
            raise ValueError("need matching times/roll/pitch arrays (>= 2 rows)")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.max(np.abs(r)) > MAX_TILT_DEG or np.max(np.abs(p)) > MAX_TILT_DEG:
            raise ValueError(f"tilt angles limited to +/-{MAX_TILT_DEG} deg")
        if self.interpolation not in ("cosine", "linear"):
            raise ValueError("interpolation must be 'cosine' or 'linear'")
        for key, val in (("times", t), ("roll_deg", r), ("pitch_deg", p)):
            val.setflags(write=False)
            object.__setattr__(self, key, val)

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def value(self, t: float) -> tuple[float, float]:
        """(roll_deg, pitch_deg) at time t, clamped to the profile ends."""
        t = float(np.clip(t, self.times[0], self.times[-1]))
        k = int(np.searchsorted(self.times, t, side="right") - 1)
        k = min(k, len(self.times) - 2)
        t0, t1 = self.times[k], self.times[k + 1]
        u = (t - t0) / (t1 - t0)
        if self.interpolation == "cosine":
            u = 0.5 * (1.0 - np.cos(np.pi * u))
        roll = self.roll_deg[k] + (self.roll_deg[k + 1] - self.roll_deg[k]) * u
        pitch = (self.pitch_deg[k]
                 + (self.pitch_deg[k + 1] - self.pitch_deg[k]) * u)
        return float(roll), float(pitch)

    def to_csv(self) -> str:
        lines = ["t,roll_deg,pitch_deg"]
        for t, r, p in zip(self.times, self.roll_deg, self.pitch_deg):
            lines.append(f"{t:.10g},{r:.10g},{p:.10g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "DisturbanceTrajectory":
        rows = [ln for ln in text.strip().splitlines() if ln]
        if rows and rows[0].lower().replace(" ", "") == "t,roll_deg,pitch_deg":
            rows = rows[1:]
        data = np.array([[float(x) for x in ln.split(",")] for ln in rows])
        return cls(times=data[:, 0], roll_deg=data[:, 1], pitch_deg=data[:, 2],
                   interpolation="linear")


def default_profile(duration: float = 60.0) -> DisturbanceTrajectory:
    """Held tilts of +/-40 deg in pitch then roll, smooth 2 s ramps."""
    key = [
        (0.0, 0.0, 0.0), (5.0, 0.0, 0.0),
        (7.0, 0.0, 40.0), (12.0, 0.0, 40.0), (14.0, 0.0, 0.0),
        (16.0, 0.0, -40.0), (21.0, 0.0, -40.0), (23.0, 0.0, 0.0),
        (25.0, 40.0, 0.0), (30.0, 40.0, 0.0), (32.0, 0.0, 0.0),
        (34.0, -40.0, 0.0), (39.0, -40.0, 0.0), (41.0, 0.0, 0.0),
    ]
    key = [k for k in key if k[0] < duration]
    key.append((duration, 0.0, 0.0))
    arr = np.asarray(key)
    return DisturbanceTrajectory(arr[:, 0], arr[:, 1], arr[:, 2])


def zero_profile(duration: float = 60.0) -> DisturbanceTrajectory:
    return DisturbanceTrajectory(np.array([0.0, duration]), np.zeros(2),
                                 np.zeros(2))


def default_stabilization_mount(pitch_deg: float = 45.0) -> Placement:
    """Chest mount pitched upward (toward +x) so the stack can level its plate."""
    t = np.eye(4)
    t[:3, :3] = Rotation.from_euler("y", pitch_deg, degrees=True).as_matrix()
    t[:3, 3] = [0.10, 0.0, 0.45]
    return Placement("chest_up", t)


@dataclass(frozen=True)
class StabilizationReport:
    times: np.ndarray
    roll_err_deg: np.ndarray
    pitch_err_deg: np.ndarray
    loop_drift_m: np.ndarray
    infeasible_ticks: int
    controller_on: bool

    def summary(self) -> dict:
        out = {"infeasible_ticks": int(self.infeasible_ticks),
               "controller_on": bool(self.controller_on),
               "loop_drift_max_m": float(self.loop_drift_m.max())}
        for name, series in (("roll", self.roll_err_deg),
                             ("pitch", self.pitch_err_deg)):
            mag = np.abs(series)
            out[name] = {
                "mean_abs_deg": float(mag.mean()),
                "std_abs_deg": float(mag.std()),
                "max_abs_deg": float(mag.max()),
            }
        return out

    def to_csv(self) -> str:
        lines = ["t,roll_err_deg,pitch_err_deg"]
        for t, r, p in zip(self.times, self.roll_err_deg, self.pitch_err_deg):
            lines.append(f"{t:.10g},{r:.10g},{p:.10g}")
        return "\n".join(lines) + "\n"

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def _torso_rotation(roll_deg: float, pitch_deg: float) -> np.ndarray:
    t = np.eye(4)
    t[:3, :3] = Rotation.from_euler(
        "xy", [roll_deg, pitch_deg], degrees=True).as_matrix()
    return t


def _level_targets(tree: KinematicTree, mount: np.ndarray) -> list[np.ndarray]:
    """Per-module plate orientation targets grading the mount tilt to level."""
    r_mount = Rotation.from_matrix(mount[:3, :3])
    correction = (Rotation.identity() * r_mount.inv())
    vec = correction.as_rotvec()
    targets = []
    for i in range(tree.n_modules):
        frac = (i + 1) / tree.n_modules
        targets.append((Rotation.from_rotvec(frac * vec) * r_mount).as_matrix())
    return targets


def run_stabilization(module: ModuleKinematics, n_modules: int,
                      dist: DisturbanceTrajectory,
                      params: ctl.ControllerParams | None = None,
                      mount: Placement | None = None,
                      duration: float = 60.0, rate_hz: float = 100.0,
                      controller_on: bool = True,
                      command_stream=None,
                      hinge_limit_deg: float = 120.0) -> StabilizationReport:
    """Closed-loop stabilization run; deterministic for fixed inputs.

    `command_stream`, when given, is an (M, 7) array `t, vx, vy, vz, wx, wy,
    wz` consumed as an end-effector velocity task (the manual-control path).
    Raises InfeasibleStart when no level starting pose exists.
    """
    params = params or ctl.ControllerParams(dt=1.0 / rate_hz)
    if abs(params.dt * rate_hz - 1.0) > 1e-9:
        params = ctl.ControllerParams(**{**params.__dict__, "dt": 1.0 / rate_hz})
    mount = mount or default_stabilization_mount()
    tree = KinematicTree(module, n_modules,
                         hinge_limit=np.radians(hinge_limit_deg))

    q_active = np.full(3 * n_modules, np.radians(45.0))
    q0 = assemble_passives(tree, q_active,
                           plate_targets=_level_targets(tree, mount.transform),
                           base_pose=mount.transform)
    poses0 = tree.fk(q0, mount.transform)
    target_r = poses0[tree.ee_body, :3, :3].copy()

    state = ctl.ControlState(q=q0, qdot=np.zeros(tree.n_q), time=0.0)
    q_ref = q0.copy()

    n_ticks = int(round(duration * rate_hz))
    times = np.empty(n_ticks)
    roll_err = np.empty(n_ticks)
    pitch_err = np.empty(n_ticks)
    drift = np.empty(n_ticks)
    infeasible = 0
    qdot_prev_cmd = np.zeros(tree.n_q)

    if command_stream is not None:
        command_stream = np.asarray(command_stream, dtype=float)

    for k in range(n_ticks):
        t = k * params.dt
        roll, pitch = dist.value(t)
        base = _torso_rotation(roll, pitch) @ mount.transform
        poses = tree.fk(state.q, base)

        err_world = Rotation.from_matrix(
            poses[tree.ee_body, :3, :3] @ target_r.T).as_rotvec()
        times[k] = t
        roll_err[k] = np.degrees(err_world[0])
        pitch_err[k] = np.degrees(err_world[1])
        drift[k] = np.abs(tree.loop_residuals(poses)).max()

        if controller_on:
            tasks = [ctl.OrientationTask(tree.ee_body, target_r,
                                         params.weight_orientation,
                                         params.gain_orientation)]
            if command_stream is not None:
                row = command_stream[
                    min(np.searchsorted(command_stream[:, 0], t, side="right"),
                        len(command_stream)) - 1]
                tasks.append(ctl.VelocityTask(tree.ee_body, row[1:4], row[4:7],
                                              params.weight_velocity))
            sol = ctl.solve_tick(tree, poses, state, tasks, params, q_ref)
            if sol.ok:
                qdot_cmd = sol.x
                qdot_prev_cmd = qdot_cmd
            else:
                infeasible += 1
                qdot_cmd = qdot_prev_cmd
        else:
            qdot_cmd = np.zeros(tree.n_q)

        state = ctl.step(tree, state, qdot_cmd, params)

    return StabilizationReport(times=times, roll_err_deg=roll_err,
                               pitch_err_deg=pitch_err, loop_drift_m=drift,
                               infeasible_ticks=infeasible,
                               controller_on=controller_on)
