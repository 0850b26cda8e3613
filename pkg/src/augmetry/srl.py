"""Modular third-arm kinematics: per-module transform, serial stacking,
placement on the body, workspace sampling, and payload capacity.

Each module is a 3-DoF parallel-plate stage.  The three actuated leg angles
map onto an extension/tilt parametrization: the mean angle sets the plate
height linearly between the folded (0.04 m) and extended (0.14 m) states,
while the first-harmonic spread of the angles around the mean tilts the
plate about an axis in the base plane.  The distal plate follows a
constant-curvature arc, so tilted configurations move the plate center
off-axis the way the physical linkage does.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .body import as_seed_sequence as body_seed
from .errors import EmptyConfiguration, JointLimit
from .geom import PointCloud

LEG_PHASES = np.radians([0.0, 120.0, 240.0])
# Largest first-harmonic spread the [5, 85] deg box admits (at mid extension).
MAX_DIFFERENTIAL_DEG = 40.0


@dataclass(frozen=True)
class ModuleKinematics:
    """Geometry and limits of one parallel-plate module."""

    min_height_m: float = 0.04
    max_height_m: float = 0.14
    plate_radius_m: float = 0.04
    theta_min_deg: float = 5.0
    theta_max_deg: float = 85.0
    max_tilt_deg: float = 25.0
    module_type: str = "strong"  # "strong" | "lightweight"
    mass_g: float = 250.0

    def __post_init__(self):
        if not 0 < self.min_height_m < self.max_height_m:
            raise ValueError("need 0 < min_height < max_height")
        if self.theta_min_deg >= self.theta_max_deg:
            raise ValueError("theta limits out of order")
        if self.module_type not in ("strong", "lightweight"):
            raise ValueError(f"unknown module type {self.module_type!r}")

    @property
    def extension_ratio(self) -> float:
        return self.max_height_m / self.min_height_m

    @property
    def limits_rad(self) -> tuple[float, float]:
        return np.radians(self.theta_min_deg), np.radians(self.theta_max_deg)


def strong_module(**overrides) -> ModuleKinematics:
    return ModuleKinematics(module_type="strong", mass_g=250.0, **overrides)


def lightweight_module(**overrides) -> ModuleKinematics:
    return ModuleKinematics(module_type="lightweight", mass_g=150.0, **overrides)


def _rotation_orthonormal(rot: np.ndarray, tol: float = 1e-9) -> bool:
    return (np.allclose(rot @ rot.T, np.eye(3), atol=tol)
            and abs(np.linalg.det(rot) - 1.0) <= tol)


@dataclass(frozen=True)
class Placement:
    """Rigid transform from the torso frame to the arm's base-plate frame.

    The base frame's +z axis is the direction the arm grows out of the body.
    """

    id: str
    transform: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.transform, dtype=float)
        if t.shape != (4, 4):
            raise ValueError("transform must be 4x4")
        if not _rotation_orthonormal(t[:3, :3]):
            raise ValueError("rotation part must be orthonormal with det +1")
        if not np.allclose(t[3], [0, 0, 0, 1]):
            raise ValueError("last row must be [0, 0, 0, 1]")
        t = t.copy()
        t.setflags(write=False)
        object.__setattr__(self, "transform", t)

    @property
    def position(self) -> np.ndarray:
        return self.transform[:3, 3]


def frame_from_z(position, z_axis, up_hint=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Build a 4x4 pose whose +z is `z_axis`, x chosen from `up_hint`."""
    z = np.asarray(z_axis, dtype=float)
    z = z / np.linalg.norm(z)
    hint = np.asarray(up_hint, dtype=float)
    x = hint - z * (hint @ z)
    if np.linalg.norm(x) < 1e-9:
        hint = np.array([1.0, 0.0, 0.0])
        x = hint - z * (hint @ z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    t = np.eye(4)
    t[:3, 0], t[:3, 1], t[:3, 2] = x, y, z
    t[:3, 3] = np.asarray(position, dtype=float)
    return t


def default_placements() -> dict[str, Placement]:
    """Four on-body mount points: chest, back, front of the leg/hip, leg side.

    The leg-front mount sits at belt height pitched 20 deg downward so short
    stacks stay beside the body while longer ones fan forward and down.
    """
    pitch = np.radians(20.0)
    return {
        "p1": Placement("p1", frame_from_z((0.10, 0.0, 0.45), (1.0, 0.0, 0.0))),
        "p2": Placement("p2", frame_from_z((-0.12, 0.0, 0.45), (-1.0, 0.0, 0.0))),
        "p3": Placement("p3", frame_from_z((0.10, 0.10, 0.03),
                                           (np.cos(pitch), 0.0, -np.sin(pitch)))),
        "p4": Placement("p4", frame_from_z((0.0, 0.18, -0.25), (0.0, 1.0, 0.0))),
    }


@dataclass(frozen=True)
class SrlConfiguration:
    modules: tuple
    placement: Placement
    n_max: int = 8

    def __post_init__(self):
        mods = tuple(self.modules)
        if len(mods) == 0:
            raise EmptyConfiguration("configuration needs at least one module")
        if len(mods) > self.n_max:
            raise ValueError(f"more than n_max={self.n_max} modules")
        object.__setattr__(self, "modules", mods)

    @property
    def n(self) -> int:
        return len(self.modules)


def uniform_stack(n: int, placement: Placement,
                  module: ModuleKinematics | None = None,
                  n_max: int = 8) -> SrlConfiguration:
    """n identical modules on a placement (the sweep's configuration family)."""
    module = module or ModuleKinematics()
    return SrlConfiguration(tuple([module] * n), placement, n_max=max(n_max, n))


def standard_stack(n: int, placement: Placement,
                   strong: ModuleKinematics | None = None,
                   lightweight: ModuleKinematics | None = None,
                   n_max: int = 8) -> SrlConfiguration:
    """Stacks as built in practice: two strong base modules, lightweight
    modules beyond (the strong motors carry the bending load at the base)."""
    strong = strong or strong_module()
    lightweight = lightweight or lightweight_module()
    mods = tuple([strong] * min(n, 2) + [lightweight] * max(0, n - 2))
    return SrlConfiguration(mods, placement, n_max=max(n_max, n))


def _check_module_limits(module: ModuleKinematics, theta: np.ndarray):
    lo, hi = module.limits_rad
    if np.any(theta < lo - 1e-12) or np.any(theta > hi + 1e-12):
        raise JointLimit(
            f"module angles {np.degrees(theta)} deg outside "
            f"[{module.theta_min_deg}, {module.theta_max_deg}] deg")


def _pcc_transform(length, tilt, azimuth):
    """Constant-curvature arc transform: extension `length` bent by `tilt`
    toward base-plane azimuth `azimuth`. Scalar version."""
    if abs(tilt) < 1e-12:
        t = np.eye(4)
        t[2, 3] = length
        return t
    radius = length / tilt
    px = radius * (1.0 - np.cos(tilt))
    pz = radius * np.sin(tilt)
    ca, sa = np.cos(azimuth), np.sin(azimuth)
    ct, st = np.cos(tilt), np.sin(tilt)
    # Tilt about the base-plane axis perpendicular to the bend direction.
    axis = np.array([-sa, ca, 0.0])
    k = axis
    kk = np.outer(k, k)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    rot = ct * np.eye(3) + st * kx + (1 - ct) * kk
    t = np.eye(4)
    t[:3, :3] = rot
    t[:3, 3] = [ca * px, sa * px, pz]
    return t


def module_state(module: ModuleKinematics, theta) -> tuple[float, float, float]:
    """(height, tilt, azimuth) for one module's three actuated angles (rad)."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (3,):
        raise JointLimit(f"expected 3 angles per module, got {theta.shape}")
    _check_module_limits(module, theta)
    lo, hi = module.limits_rad
    mean = theta.mean()
    height = module.min_height_m + (module.max_height_m - module.min_height_m) * (
        (mean - lo) / (hi - lo))
    delta = theta - mean
    a = (2.0 / 3.0) * np.sum(delta * np.cos(LEG_PHASES))
    b = (2.0 / 3.0) * np.sum(delta * np.sin(LEG_PHASES))
    amplitude = np.hypot(a, b)
    tilt = np.radians(module.max_tilt_deg) * amplitude / np.radians(MAX_DIFFERENTIAL_DEG)
    azimuth = np.arctan2(b, a)
    return float(height), float(tilt), float(azimuth)


def module_fk(module: ModuleKinematics, theta) -> np.ndarray:
    """Base-plate to distal-plate transform for one module."""
    height, tilt, azimuth = module_state(module, theta)
    return _pcc_transform(height, tilt, azimuth)


def arm_fk(cfg: SrlConfiguration, theta_all) -> np.ndarray:
    """End-effector pose in the torso frame: placement times the module chain."""
    theta_all = np.asarray(theta_all, dtype=float)
    if theta_all.shape != (3 * cfg.n,):
        raise JointLimit(
            f"expected {3 * cfg.n} angles for {cfg.n} modules, got {theta_all.shape}")
    t = cfg.placement.transform.copy()
    for i, module in enumerate(cfg.modules):
        t = t @ module_fk(module, theta_all[3 * i:3 * i + 3])
    return t


def _batch_module_transforms(module: ModuleKinematics, thetas: np.ndarray):
    """(N, 4, 4) transforms for an (N, 3) block of one module's angles."""
    lo, hi = module.limits_rad
    mean = thetas.mean(axis=1)
    height = module.min_height_m + (module.max_height_m - module.min_height_m) * (
        (mean - lo) / (hi - lo))
    delta = thetas - mean[:, None]
    a = (2.0 / 3.0) * (delta @ np.cos(LEG_PHASES))
    b = (2.0 / 3.0) * (delta @ np.sin(LEG_PHASES))
    amp = np.hypot(a, b)
    tilt = np.radians(module.max_tilt_deg) * amp / np.radians(MAX_DIFFERENTIAL_DEG)
    azim = np.arctan2(b, a)

    n = len(thetas)
    ct, st = np.cos(tilt), np.sin(tilt)
    ca, sa = np.cos(azim), np.sin(azim)
    # Guard the straight configuration: radius -> infinity, arc -> pure rise.
    small = tilt < 1e-12
    safe_tilt = np.where(small, 1.0, tilt)
    px = np.where(small, 0.0, height / safe_tilt * (1.0 - ct))
    pz = np.where(small, height, height / safe_tilt * st)

    kx, ky = -sa, ca
    out = np.zeros((n, 4, 4))
    one_ct = 1.0 - ct
    out[:, 0, 0] = ct + kx * kx * one_ct
    out[:, 0, 1] = kx * ky * one_ct
    out[:, 0, 2] = ky * st
    out[:, 1, 0] = kx * ky * one_ct
    out[:, 1, 1] = ct + ky * ky * one_ct
    out[:, 1, 2] = -kx * st
    out[:, 2, 0] = -ky * st
    out[:, 2, 1] = kx * st
    out[:, 2, 2] = ct
    out[:, 0, 3] = ca * px
    out[:, 1, 3] = sa * px
    out[:, 2, 3] = pz
    out[:, 3, 3] = 1.0
    return out


def sample_srl_workspace(cfg: SrlConfiguration, n_samples: int, seed) -> PointCloud:
    """End-effector position cloud from uniform joint-box samples (torso frame)."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    children = body_seed(seed).spawn(cfg.n)
    acc = np.broadcast_to(cfg.placement.transform, (n_samples, 4, 4)).copy()
    for module, child in zip(cfg.modules, children):
        rng = np.random.default_rng(child)
        lo, hi = module.limits_rad
        thetas = rng.uniform(lo, hi, size=(n_samples, 3))
        acc = acc @ _batch_module_transforms(module, thetas)
    return PointCloud(acc[:, :3, 3], frame="torso")


# Straight-beam payload measurements: stack composition -> grams.
CAPACITY_TABLE: dict[tuple[str, ...], float] = {
    ("strong",): 3000.0,
    ("strong", "strong"): 1000.0,
    ("strong", "strong", "lightweight"): 300.0,
}
# Successive tabulated entries shrink by this factor per added module.
CAPACITY_TREND = 300.0 / 1000.0
# Lightweight motors stall at 0.52 Nm against 1.4 Nm for the strong ones.
LIGHT_TORQUE_RATIO = 0.52 / 1.4


@dataclass(frozen=True)
class CapacityRating:
    grams: float
    estimate: bool


def capacity(cfg: SrlConfiguration) -> CapacityRating:
    """Payload capacity of a module stack.

    Tabulated stacks are exact.  Anything else is a conservative estimate:
    start from the largest tabulated stack size not exceeding n, shrink by
    the tabulated trend per extra module, and derate when the base module
    is the weaker type.
    """
    stack = tuple(m.module_type for m in cfg.modules)
    if stack in CAPACITY_TABLE:
        return CapacityRating(CAPACITY_TABLE[stack], estimate=False)
    base_n = min(cfg.n, 3)
    base_stack = [k for k in CAPACITY_TABLE if len(k) == base_n][0]
    grams = CAPACITY_TABLE[base_stack] * CAPACITY_TREND ** (cfg.n - base_n)
    if stack[0] == "lightweight":
        grams *= LIGHT_TORQUE_RATIO
    return CapacityRating(grams, estimate=True)


def total_mass(cfg: SrlConfiguration) -> float:
    return float(sum(m.mass_g for m in cfg.modules))


def max_reach(cfg: SrlConfiguration) -> float:
    """Upper bound on end-effector distance from the base plate."""
    return float(sum(m.max_height_m for m in cfg.modules))
