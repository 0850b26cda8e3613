"""Human kinematic model: two 4-DoF arms, anthropometry, and the visual field.

The torso frame has x forward, y left, z up, origin at the pelvis.  Each arm
is shoulder (3 DoF) plus elbow (1 DoF); with all angles zero the arm hangs
straight down.  The shoulder composes intrinsically as frontal elevation
(about x, mirrored per side), then forward flexion (about y), then axial
humeral rotation (mirrored); the axial term orients the elbow fold plane.
This composition keeps the upper arm on or in front of the frontal plane,
so the reachable set extends behind the torso only by the shallow pocket an
over-folded elbow produces.  Joint boxes follow functional range-of-motion
data:

    adduction / axial rotation  -90 deg .. +25 deg
    abduction (frontal raise)     0 deg .. 130 deg
    flexion-extension             0 deg .. 120 deg
    elbow flexion                 0 deg .. 130 deg
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import JointLimit
from .geom import PointCloud

JOINT_NAMES = ("adduction", "abduction", "flexion", "elbow")
LIMITS_LOW_DEG = np.array([-90.0, 0.0, 0.0, 0.0])
LIMITS_HIGH_DEG = np.array([25.0, 130.0, 120.0, 130.0])


@dataclass(frozen=True)
class Anthropometry:
    """Body segment lengths (m) and shoulder offsets from the pelvis origin."""

    upper_arm_m: float = 0.30
    forearm_hand_m: float = 0.33
    shoulder_left_m: tuple = (0.0, 0.20, 0.55)
    shoulder_right_m: tuple = (0.0, -0.20, 0.55)

    def __post_init__(self):
        if self.upper_arm_m <= 0 or self.forearm_hand_m <= 0:
            raise ValueError("segment lengths must be positive")

    @property
    def reach(self) -> float:
        return self.upper_arm_m + self.forearm_hand_m

    def shoulder(self, side: str) -> np.ndarray:
        if side == "left":
            return np.asarray(self.shoulder_left_m, dtype=float)
        if side == "right":
            return np.asarray(self.shoulder_right_m, dtype=float)
        raise ValueError(f"unknown side {side!r}")


@dataclass(frozen=True)
class HumanArmModel:
    side: str  # "left" or "right"

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {self.side!r}")

    @property
    def limits_rad(self) -> tuple[np.ndarray, np.ndarray]:
        return np.radians(LIMITS_LOW_DEG), np.radians(LIMITS_HIGH_DEG)


@dataclass(frozen=True)
class VisualField:
    """Closed half-space of visible points: normal . (p - origin) >= offset."""

    normal: tuple = (1.0, 0.0, 0.0)
    offset_m: float = 0.0

    def visible_mask(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = np.asarray(self.normal, dtype=float)
        return pts @ n >= self.offset_m - 1e-12


def is_visible(field: VisualField, point) -> bool:
    return bool(field.visible_mask(point)[0])


def _rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def _check_limits(theta):
    lo, hi = np.radians(LIMITS_LOW_DEG), np.radians(LIMITS_HIGH_DEG)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (4,):
        raise JointLimit(f"expected 4 joint angles, got shape {theta.shape}")
    if np.any(theta < lo - 1e-12) or np.any(theta > hi + 1e-12):
        raise JointLimit(f"angles {np.degrees(theta)} deg outside limits")
    return theta


def human_fk(arm: HumanArmModel, anthro: Anthropometry, theta) -> np.ndarray:
    """Wrist position in the torso frame for joint angles (rad).

    Side-mirrored axes make left and right arms exact sagittal reflections of
    each other at equal joint angles.
    """
    theta = _check_limits(theta)
    a, b, f, e = theta
    sgn = 1.0 if arm.side == "left" else -1.0
    r_shoulder = _rot_x(sgn * b) @ _rot_y(-f) @ _rot_z(sgn * a)
    r_elbow = _rot_y(-e)
    down = np.array([0.0, 0.0, -1.0])
    shoulder = anthro.shoulder(arm.side)
    return (shoulder
            + r_shoulder @ (anthro.upper_arm_m * down)
            + r_shoulder @ r_elbow @ (anthro.forearm_hand_m * down))


def _fk_batch(side: str, anthro: Anthropometry, thetas: np.ndarray) -> np.ndarray:
    """Vectorized wrist positions for an (N, 4) array of joint angles."""
    sgn = 1.0 if side == "left" else -1.0
    a = sgn * thetas[:, 0]
    b = sgn * thetas[:, 1]
    f = thetas[:, 2]
    e = thetas[:, 3]

    ca, sa, cb, sb = np.cos(a), np.sin(a), np.cos(b), np.sin(b)
    cf, sf = np.cos(f), np.sin(f)
    ce, se = np.cos(e), np.sin(e)

    # Upper arm: R_x(b) R_y(-f) R_z(a) (0,0,-L) -- the axial term drops out.
    ux = anthro.upper_arm_m * sf
    uy = anthro.upper_arm_m * sb * cf
    uz = -anthro.upper_arm_m * cb * cf

    # Forearm: same chain followed by the elbow fold R_y(-e).
    vx = se * ca
    vy = se * sa
    vz = -ce
    wx = cf * vx - sf * vz
    wy = vy
    wz = sf * vx + cf * vz
    fx = anthro.forearm_hand_m * wx
    fy = anthro.forearm_hand_m * (cb * wy - sb * wz)
    fz = anthro.forearm_hand_m * (sb * wy + cb * wz)

    pos = np.stack([ux + fx, uy + fy, uz + fz], axis=1)
    return anthro.shoulder(side)[None, :] + pos


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def sample_human_workspace(anthro: Anthropometry, n_samples: int, seed,
                           sides=("left", "right")) -> PointCloud:
    """Wrist-position cloud from uniform joint-box samples, n_samples per arm.

    Children of a single SeedSequence drive each arm so the pooled cloud is
    reproducible and independent of any chunking.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    lo, hi = np.radians(LIMITS_LOW_DEG), np.radians(LIMITS_HIGH_DEG)
    children = as_seed_sequence(seed).spawn(len(sides))
    clouds = []
    for side, child in zip(sides, children):
        rng = np.random.default_rng(child)
        thetas = rng.uniform(lo, hi, size=(n_samples, 4))
        clouds.append(_fk_batch(side, anthro, thetas))
    return PointCloud(np.vstack(clouds), frame="torso")
