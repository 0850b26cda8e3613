"""Reconfiguration search and autonomy selection.

Given a task (collaborative and/or non-collaborative point regions plus a
payload), the planner scans placements and module counts, keeps the
configurations whose workspace decomposition can host the task, and picks a
control mode per configuration: manual when the task needs hand-to-hand
collaboration, autonomous when it happens where the wearer cannot see, and
a user-biased free choice otherwise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import srl, workspace
from .body import Anthropometry, VisualField, as_seed_sequence, sample_human_workspace
from .errors import NotFeasible
from .geom import PointCloud, contains_all
from .workspace import WorkspaceDecomposition


class Autonomy(enum.Enum):
    MANUAL = "manual"
    AUTONOMOUS = "autonomous"
    EITHER = "either"


@dataclass(frozen=True)
class TaskSpec:
    """Task regions in the torso frame plus the payload the arm must carry."""

    name: str
    collaborative: PointCloud | None = None
    non_collaborative: PointCloud | None = None
    payload_g: float = 0.0

    def __post_init__(self):
        total = (0 if self.collaborative is None else len(self.collaborative)) + \
                (0 if self.non_collaborative is None else len(self.non_collaborative))
        if total == 0:
            raise ValueError("task needs at least one region point")
        if self.payload_g < 0:
            raise ValueError("payload must be non-negative")

    @property
    def all_points(self) -> np.ndarray:
        parts = []
        if self.collaborative is not None and len(self.collaborative):
            parts.append(self.collaborative.points)
        if self.non_collaborative is not None and len(self.non_collaborative):
            parts.append(self.non_collaborative.points)
        return np.vstack(parts)


def box_region(center, half_extents, n_points: int, seed) -> PointCloud:
    """Uniform samples in an axis-aligned box; a convenient region generator."""
    rng = np.random.default_rng(as_seed_sequence(seed))
    c = np.asarray(center, dtype=float)
    h = np.asarray(half_extents, dtype=float)
    pts = rng.uniform(c - h, c + h, size=(n_points, 3))
    return PointCloud(pts)


def _hull_holds(hull, points, tol) -> np.ndarray:
    """Mask of points inside `hull` within tol; all-False for a missing hull."""
    if points is None or len(points) == 0:
        return np.ones(0, dtype=bool)
    if hull is None:
        return np.zeros(len(points), dtype=bool)
    return contains_all(hull, points, tol=tol)


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    containment_ok: bool
    payload_ok: bool
    capacity_g: float
    capacity_estimated: bool
    violations: dict = field(default_factory=dict)

    def describe(self) -> str:
        if self.feasible:
            return "feasible"
        parts = []
        for region, count in self.violations.items():
            parts.append(f"{count} {region} point(s) outside workspace")
        if not self.payload_ok:
            parts.append("payload exceeds capacity")
        return "infeasible: " + "; ".join(parts)


def check_feasibility(task: TaskSpec, dec: WorkspaceDecomposition,
                      cfg: srl.SrlConfiguration,
                      geometric_only: bool = False) -> FeasibilityResult:
    """Can this configuration host the task?

    Geometric conditions (hull containment with the decomposition's eps as
    boundary slack): collaborative points inside the collaborative workspace,
    non-collaborative points inside the arm's own reachable hull, and the
    whole task inside the augmented workspace.  Payload is checked against
    the stack's capacity unless `geometric_only`.
    """
    tol = dec.eps
    violations = {}

    m = _hull_holds(dec.hull_collaborative,
                    None if task.collaborative is None else task.collaborative.points,
                    tol)
    if not m.all():
        violations["collaborative"] = int((~m).sum())

    m = _hull_holds(dec.hull_robot,
                    None if task.non_collaborative is None
                    else task.non_collaborative.points, tol)
    if not m.all():
        violations["non_collaborative"] = int((~m).sum())

    m = _hull_holds(dec.hull_augmented, task.all_points, tol)
    if not m.all():
        violations["augmented"] = int((~m).sum())

    containment_ok = not violations
    rating = srl.capacity(cfg)
    payload_ok = geometric_only or rating.grams >= task.payload_g
    return FeasibilityResult(
        feasible=containment_ok and payload_ok,
        containment_ok=containment_ok,
        payload_ok=payload_ok,
        capacity_g=rating.grams,
        capacity_estimated=rating.estimate,
        violations=violations,
    )


def select_autonomy(task: TaskSpec, dec: WorkspaceDecomposition,
                    bias: Autonomy = Autonomy.AUTONOMOUS) -> tuple[Autonomy, Autonomy]:
    """Control mode for a feasible task/decomposition pair.

    Returns (selected, effective): `effective` resolves an EITHER selection
    with the configured bias.  Raises NotFeasible when the task regions do
    not sit inside the required workspace components.
    """
    tol = dec.eps
    has_collab = task.collaborative is not None and len(task.collaborative) > 0
    has_noncollab = (task.non_collaborative is not None
                     and len(task.non_collaborative) > 0)

    if has_collab:
        inside_c = _hull_holds(dec.hull_collaborative, task.collaborative.points, tol)
        if not inside_c.all():
            raise NotFeasible("collaborative region not inside the "
                              "collaborative workspace")
        return Autonomy.MANUAL, Autonomy.MANUAL

    if has_noncollab:
        inside_r = _hull_holds(dec.hull_robot, task.non_collaborative.points, tol)
        if not inside_r.all():
            raise NotFeasible("task region not reachable by the arm")
        inside_nv = _hull_holds(dec.hull_nonvisible,
                                task.non_collaborative.points, tol)
        if inside_nv.all() and len(inside_nv):
            return Autonomy.AUTONOMOUS, Autonomy.AUTONOMOUS

    return Autonomy.EITHER, bias


@dataclass(frozen=True)
class ConfigDecision:
    placement_id: str
    n: int
    autonomy: Autonomy
    effective_autonomy: Autonomy
    feasibility: FeasibilityResult
    rationale: str

    def csv_row(self) -> str:
        return (f"{self.placement_id},{self.n},{self.autonomy.value},"
                f"{self.effective_autonomy.value},{self.feasibility.capacity_g:.10g},"
                f"{int(self.feasibility.capacity_estimated)}")


class SearchStatus(enum.Enum):
    OK = "ok"
    CHANGE_POSITION = "change_position"


@dataclass(frozen=True)
class SearchResult:
    decisions: tuple[ConfigDecision, ...]
    status: SearchStatus

    def to_csv(self) -> str:
        lines = ["placement,n,autonomy,effective_autonomy,capacity_g,capacity_estimated"]
        lines += [d.csv_row() for d in self.decisions]
        return "\n".join(lines) + "\n"

    def rationale_text(self) -> str:
        if not self.decisions:
            return ("No placement/module-count combination can host this task; "
                    "the wearer must change position relative to the task.\n")
        return "\n".join(d.rationale for d in self.decisions) + "\n"


class PlanningContext:
    """Lazily decomposes workspaces per (placement, n) and caches them.

    All cells derive their randomness from one seed, so repeated queries and
    full searches are reproducible.
    """

    def __init__(self, anthro: Anthropometry, module: srl.ModuleKinematics,
                 placements: dict[str, srl.Placement], n_range: range,
                 samples: int, seed: int, field: VisualField | None = None,
                 reference_samples: int = workspace.REFERENCE_SAMPLES,
                 lightweight: srl.ModuleKinematics | None = None):
        self.anthro = anthro
        self.module = module
        self.lightweight = lightweight or srl.lightweight_module(
            min_height_m=module.min_height_m,
            max_height_m=module.max_height_m,
            plate_radius_m=module.plate_radius_m,
            theta_min_deg=module.theta_min_deg,
            theta_max_deg=module.theta_max_deg,
            max_tilt_deg=module.max_tilt_deg)
        self.placements = dict(placements)
        self.n_range = list(n_range)
        self.samples = samples
        self.reference_samples = reference_samples
        self.field = field or VisualField()

        root = as_seed_sequence(seed)
        ids = sorted(self.placements)
        children = root.spawn(2 + len(ids) * len(self.n_range))
        self._human_seed, self._probe_seed = children[0], children[1]
        self._cell_seeds = {}
        k = 2
        for pid in ids:
            for n in self.n_range:
                self._cell_seeds[(pid, n)] = children[k]
                k += 1
        self._human = None
        self._eps_human = None
        self._cache: dict[tuple[str, int], tuple] = {}

    @property
    def human(self) -> PointCloud:
        if self._human is None:
            self._human = sample_human_workspace(self.anthro, self.samples,
                                                 self._human_seed)
        return self._human

    @property
    def eps_human(self) -> float:
        if self._eps_human is None:
            self._eps_human = workspace.human_coverage_eps(
                self.anthro, self.human, self._probe_seed)
        return self._eps_human

    def decomposition(self, placement_id: str, n: int):
        key = (placement_id, n)
        if key not in self._cache:
            cfg = srl.standard_stack(n, self.placements[placement_id],
                                     strong=self.module,
                                     lightweight=self.lightweight,
                                     n_max=max(8, n))
            sample_seed, ref_seed = as_seed_sequence(
                self._cell_seeds[key]).spawn(2)
            robot = srl.sample_srl_workspace(cfg, self.samples, sample_seed)
            eps_robot = workspace.robot_cell_eps(cfg, robot, ref_seed,
                                                 self.reference_samples)
            dec = workspace.decompose(self.human, robot, self.field,
                                      eps_robot + self.eps_human)
            self._cache[key] = (cfg, dec)
        return self._cache[key]


def _rationale(task, placement_id, n, feas, autonomy, effective):
    reasons = {
        Autonomy.MANUAL: "collaboration with the hands needs intention detection",
        Autonomy.AUTONOMOUS: "no visual feedback is available in the task region",
        Autonomy.EITHER: "task is reachable with visual feedback; either mode works",
    }
    mode = autonomy.value
    if autonomy is Autonomy.EITHER and effective is not autonomy:
        mode += f" (bias: {effective.value})"
    return (f"{task.name}: {n} module(s) at {placement_id} -> {mode}; "
            f"{reasons[autonomy]}; capacity {feas.capacity_g:.0f} g"
            f"{' (estimate)' if feas.capacity_estimated else ''} vs "
            f"payload {task.payload_g:.0f} g")


def search_configurations(task: TaskSpec, ctx: PlanningContext,
                          geometric_only: bool = False,
                          bias: Autonomy = Autonomy.AUTONOMOUS) -> SearchResult:
    """All feasible configurations, smallest stacks first.

    Orders by ascending module count, then descending capacity, then
    placement id.  An empty result carries the change-position status.
    """
    decisions = []
    placement_ids = sorted(ctx.placements)
    for n in ctx.n_range:
        for pid in placement_ids:
            cfg, dec = ctx.decomposition(pid, n)
            feas = check_feasibility(task, dec, cfg, geometric_only)
            if not feas.feasible:
                continue
            autonomy, effective = select_autonomy(task, dec, bias)
            decisions.append(ConfigDecision(
                placement_id=pid, n=n, autonomy=autonomy,
                effective_autonomy=effective, feasibility=feas,
                rationale=_rationale(task, pid, n, feas, autonomy, effective)))
    decisions.sort(key=lambda d: (d.n, -d.feasibility.capacity_g, d.placement_id))
    status = SearchStatus.OK if decisions else SearchStatus.CHANGE_POSITION
    return SearchResult(tuple(decisions), status)
