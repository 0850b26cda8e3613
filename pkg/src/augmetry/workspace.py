"""Workspace decomposition and augmentation metrics.

The robot workspace cloud is partitioned point-by-point into three
components: the collaborative part (within the proximity threshold of the
human cloud), the visible extended part (the rest that falls inside the
visual field), and the non-visible extended part (everything else).  Volumes
come from convex hulls of each component; the three workspace fractions are
renormalized over the component hull volumes so they always sum to one.

A sweep evaluates the full placement x module-count grid and reports, per
cell, the extension / visible-extension / collaboration ratios against the
human workspace volume along with the workspace fractions.
"""

from __future__ import annotations

import concurrent.futures
import os
from dataclasses import dataclass

import numpy as np

from . import srl
from .body import (
    Anthropometry,
    VisualField,
    as_seed_sequence,
    sample_human_workspace,
)
from .errors import DegenerateCloud, DegenerateHuman, DegenerateRobot
from .geom import (
    ConvexPolytope,
    PointCloud,
    build_index,
    calibrate_epsilon,
    convex_hull,
    within,
)

REFERENCE_SAMPLES = 100000  # high-density cloud used to calibrate eps
PROBE_SAMPLES = 50000  # per-arm probe cloud for the human coverage radius
COVERAGE_QUANTILE = 0.99


def _hull_or_none(cloud: PointCloud):
    if len(cloud) < 4:
        return None
    try:
        return convex_hull(cloud)
    except DegenerateCloud:
        return None


def _volume(hull: ConvexPolytope | None) -> float:
    return 0.0 if hull is None else hull.volume


@dataclass(frozen=True)
class WorkspaceDecomposition:
    """Point clouds, hulls, and volumes of the workspace components."""

    human: PointCloud
    robot: PointCloud
    collaborative: PointCloud
    visible_extended: PointCloud
    nonvisible_extended: PointCloud
    augmented: PointCloud
    hull_human: ConvexPolytope | None
    hull_robot: ConvexPolytope | None
    hull_collaborative: ConvexPolytope | None
    hull_visible: ConvexPolytope | None
    hull_nonvisible: ConvexPolytope | None
    hull_augmented: ConvexPolytope | None
    eps: float

    @property
    def volumes(self) -> dict[str, float]:
        return {
            "human": _volume(self.hull_human),
            "robot": _volume(self.hull_robot),
            "collaborative": _volume(self.hull_collaborative),
            "visible_extended": _volume(self.hull_visible),
            "nonvisible_extended": _volume(self.hull_nonvisible),
            "augmented": _volume(self.hull_augmented),
        }

    @property
    def degenerate_components(self) -> tuple[str, ...]:
        flags = []
        for name, cloud, hull in (
            ("collaborative", self.collaborative, self.hull_collaborative),
            ("visible_extended", self.visible_extended, self.hull_visible),
            ("nonvisible_extended", self.nonvisible_extended, self.hull_nonvisible),
        ):
            if len(cloud) > 0 and hull is None:
                flags.append(name)
        return tuple(flags)


def decompose(human: PointCloud, robot: PointCloud, field: VisualField,
              eps: float) -> WorkspaceDecomposition:
    """Split the robot cloud into collaborative / visible / non-visible parts.

    The three parts partition the robot cloud's points exactly.  Components
    with fewer than 4 non-coplanar points keep their points but record no
    hull (volume 0).
    """
    if len(human) == 0:
        raise DegenerateHuman("human cloud is empty")
    if len(robot) > 0:
        near_human = within(robot, build_index(human), eps)
        collaborative = robot.select(near_human)
        remainder = robot.select(~near_human)
        vis_mask = field.visible_mask(remainder.points) if len(remainder) else \
            np.zeros(0, dtype=bool)
        visible = remainder.select(vis_mask)
        nonvisible = remainder.select(~vis_mask)
        augmented = human.merged_with(robot)
    else:
        empty = PointCloud(np.zeros((0, 3)), human.frame)
        collaborative = visible = nonvisible = empty
        augmented = human

    return WorkspaceDecomposition(
        human=human,
        robot=robot,
        collaborative=collaborative,
        visible_extended=visible,
        nonvisible_extended=nonvisible,
        augmented=augmented,
        hull_human=_hull_or_none(human),
        hull_robot=_hull_or_none(robot),
        hull_collaborative=_hull_or_none(collaborative),
        hull_visible=_hull_or_none(visible),
        hull_nonvisible=_hull_or_none(nonvisible),
        hull_augmented=_hull_or_none(augmented),
        eps=eps,
    )


def augmentation_ratios(dec: WorkspaceDecomposition) -> tuple[float, float, float]:
    """(extension, visible-extension, collaboration) ratios against the human volume.

    The visible-extension numerator is the hull of the visible-extended points
    pooled with the human points, so extension >= visible-extension >= 1 holds
    by hull monotonicity.
    """
    vol_h = _volume(dec.hull_human)
    if vol_h <= 0:
        raise DegenerateHuman("human workspace volume is zero")
    extension = _volume(dec.hull_augmented) / vol_h
    pooled = dec.human.merged_with(dec.visible_extended)
    visible_ext = _volume(_hull_or_none(pooled)) / vol_h
    collaboration = _volume(dec.hull_collaborative) / vol_h
    return extension, visible_ext, collaboration


def workspace_ratios(dec: WorkspaceDecomposition) -> tuple[float, float, float]:
    """Fractions (collaborative, visible, non-visible) of the robot workspace.

    Component hulls can overlap after convexification, so the fractions are
    renormalized over the three component volumes; they sum to exactly 1.
    """
    if len(dec.robot) == 0 or _volume(dec.hull_robot) <= 0:
        raise DegenerateRobot("robot workspace volume is zero")
    v = (_volume(dec.hull_collaborative),
         _volume(dec.hull_visible),
         _volume(dec.hull_nonvisible))
    total = sum(v)
    if total <= 0:
        raise DegenerateRobot("all workspace components are degenerate")
    return v[0] / total, v[1] / total, v[2] / total


@dataclass(frozen=True)
class SweepCell:
    """One (placement, module count) entry of an augmentation report.

    `eps` is the operative robot-vs-human threshold (sum of the per-cloud
    radii); `eps_robot` alone carries the 10% volume-calibration guarantee.
    """

    placement_id: str
    n: int
    extension_ratio: float
    visible_extension_ratio: float
    collaboration_ratio: float
    w_collaborative: float
    w_visible: float
    w_nonvisible: float
    vol_human: float
    vol_robot: float
    eps: float
    eps_robot: float = 0.0
    eps_human: float = 0.0
    degenerate: tuple[str, ...] = ()


@dataclass(frozen=True)
class AugmentationReport:
    cells: tuple[SweepCell, ...]

    def cell(self, placement_id: str, n: int) -> SweepCell:
        for c in self.cells:
            if c.placement_id == placement_id and c.n == n:
                return c
        raise KeyError(f"no cell ({placement_id}, {n})")

    def to_csv(self) -> str:
        lines = ["placement,n,r_e,r_ev,r_c,w_C,w_EV,w_ENV,vol_H,vol_R,eps"]
        for c in self.cells:
            lines.append(
                f"{c.placement_id},{c.n},{c.extension_ratio:.10g},"
                f"{c.visible_extension_ratio:.10g},{c.collaboration_ratio:.10g},"
                f"{c.w_collaborative:.10g},{c.w_visible:.10g},{c.w_nonvisible:.10g},"
                f"{c.vol_human:.10g},{c.vol_robot:.10g},{c.eps:.10g}")
        return "\n".join(lines) + "\n"


def robot_cell_eps(cfg: srl.SrlConfiguration, robot: PointCloud, seed,
                   reference_samples: int = REFERENCE_SAMPLES) -> float:
    """Proximity threshold for one sweep cell, calibrated against a
    high-density reference hull of the same configuration."""
    dense = srl.sample_srl_workspace(cfg, reference_samples, seed)
    reference = convex_hull(dense).volume
    return calibrate_epsilon(robot, reference)


def human_coverage_eps(anthro: Anthropometry, human: PointCloud, seed,
                       probe_samples: int = PROBE_SAMPLES,
                       quantile: float = COVERAGE_QUANTILE) -> float:
    """Coverage radius of the sampled human cloud.

    The robot-vs-human proximity test asks whether a robot point lies inside
    the region the human cloud discretizes, so the pairing threshold must
    absorb the human cloud's own sampling gaps.  Measured as a high quantile
    of the distance from a dense probe resampling of the same distribution
    to the cloud in use.
    """
    probe = sample_human_workspace(anthro, probe_samples, seed)
    dist, _ = build_index(human).query(probe.points)
    return float(np.quantile(dist, quantile))


def _evaluate_cell(placement, n, module, human, field, samples, cell_seed,
                   eps_human, reference_samples):
    cfg = srl.uniform_stack(n, placement, module, n_max=max(8, n))
    sample_seed, ref_seed = as_seed_sequence(cell_seed).spawn(2)
    robot = srl.sample_srl_workspace(cfg, samples, sample_seed)
    eps_robot = robot_cell_eps(cfg, robot, ref_seed, reference_samples)
    # Two clouds interact when their per-point neighborhoods overlap, so the
    # operative threshold is the sum of the per-cloud radii.
    eps = eps_robot + eps_human
    dec = decompose(human, robot, field, eps)
    r_e, r_ev, r_c = augmentation_ratios(dec)
    w_c, w_ev, w_env = workspace_ratios(dec)
    cell = SweepCell(
        placement_id=placement.id, n=n,
        extension_ratio=r_e, visible_extension_ratio=r_ev,
        collaboration_ratio=r_c,
        w_collaborative=w_c, w_visible=w_ev, w_nonvisible=w_env,
        vol_human=dec.volumes["human"], vol_robot=dec.volumes["robot"],
        eps=eps, eps_robot=eps_robot, eps_human=eps_human,
        degenerate=dec.degenerate_components)
    return cell, dec


def sweep(anthro: Anthropometry, module: srl.ModuleKinematics,
          placements: list[srl.Placement], n_range: range, samples: int,
          seed: int, field: VisualField | None = None,
          reference_samples: int = REFERENCE_SAMPLES,
          threads: int | None = None,
          keep_decompositions: bool = False):
    """Evaluate every (placement, n) cell; deterministic for a fixed seed.

    Cells are independent; `threads` (or AUGMETRY_THREADS) bounds the worker
    pool.  Results are assembled in fixed (placement, n) order either way.
    With `keep_decompositions` the full per-cell decompositions come back in
    a dict alongside the report.
    """
    field = field or VisualField()
    root = as_seed_sequence(seed)
    human_seed, probe_seed, *cell_seeds = root.spawn(
        2 + len(placements) * len(n_range))
    human = sample_human_workspace(anthro, samples, human_seed)
    eps_human = human_coverage_eps(anthro, human, probe_seed)

    jobs = []
    k = 0
    for placement in placements:
        for n in n_range:
            jobs.append((placement, n, cell_seeds[k]))
            k += 1

    if threads is None:
        threads = int(os.environ.get("AUGMETRY_THREADS", "1"))

    def run(job):
        placement, n, cell_seed = job
        return _evaluate_cell(placement, n, module, human, field, samples,
                              cell_seed, eps_human, reference_samples)

    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]
    report = AugmentationReport(tuple(cell for cell, _ in results))
    if keep_decompositions:
        decs = {(cell.placement_id, cell.n): dec for cell, dec in results}
        return report, decs
    return report
