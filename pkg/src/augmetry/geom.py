"""Deterministic computational-geometry core.

Workspaces are represented as sampled point clouds.  Set algebra between
clouds (intersection, difference) is realized through a k-d tree and a
proximity threshold ``eps``: a point of A belongs to "A intersect B" when
its nearest neighbor in B is within ``eps``.  Volumes are computed from
convex hulls of the point sets, so unions of non-convex regions are
deliberately convexified; the overestimation this introduces is accepted
rather than corrected.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, cKDTree

from .errors import (
    CalibrationFailed,
    DegenerateCloud,
    EmptyInput,
    InvalidTolerance,
)

RANK_TOL = 1e-9  # meters; degeneracy threshold for hull construction
CONTAIN_TOL = 1e-9  # meters; default half-space containment slack


@dataclass(frozen=True)
class PointCloud:
    """An immutable set of 3D points (meters) tagged with a frame label."""

    points: np.ndarray
    frame: str = "torso"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        if not self.frame:
            raise ValueError("frame label must be non-empty")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    def select(self, mask) -> "PointCloud":
        return PointCloud(self.points[np.asarray(mask)], self.frame)

    def merged_with(self, other: "PointCloud") -> "PointCloud":
        return PointCloud(np.vstack([self.points, other.points]), self.frame)


class ProximityIndex:
    """Exact nearest-neighbor index over a point cloud."""

    def __init__(self, source: PointCloud):
        if len(source) == 0:
            raise EmptyInput("cannot index an empty cloud")
        self.source = source
        self._tree = cKDTree(source.points)

    def query(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Distances and indices of the nearest source point for each query."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        dist, idx = self._tree.query(pts, k=1)
        return dist, idx


def build_index(cloud: PointCloud) -> ProximityIndex:
    return ProximityIndex(cloud)


def within(cloud: PointCloud, index: ProximityIndex, eps: float) -> np.ndarray:
    """Boolean mask: which points of `cloud` lie within `eps` of the indexed cloud."""
    if eps <= 0:
        raise InvalidTolerance(f"eps must be positive, got {eps}")
    if len(cloud) == 0:
        return np.zeros(0, dtype=bool)
    dist, _ = index.query(cloud.points)
    return dist <= eps


def cloud_intersect(a: PointCloud, b: PointCloud, eps: float) -> PointCloud:
    """Points of `a` within `eps` of some point of `b`."""
    if eps <= 0:
        raise InvalidTolerance(f"eps must be positive, got {eps}")
    if len(a) == 0 or len(b) == 0:
        return PointCloud(np.zeros((0, 3)), a.frame)
    return a.select(within(a, build_index(b), eps))


def cloud_subtract(a: PointCloud, b: PointCloud, eps: float) -> PointCloud:
    """Points of `a` farther than `eps` from every point of `b`."""
    if eps <= 0:
        raise InvalidTolerance(f"eps must be positive, got {eps}")
    if len(a) == 0:
        return PointCloud(np.zeros((0, 3)), a.frame)
    if len(b) == 0:
        return a
    return a.select(~within(a, build_index(b), eps))


@dataclass(frozen=True)
class ConvexPolytope:
    """Convex hull mesh with triangle faces, outward half-spaces, and volume.

    ``normals @ x <= offsets`` (within tolerance) characterizes the interior.
    Vertices are sorted lexicographically so equal inputs produce identical
    polytopes.
    """

    vertices: np.ndarray
    faces: np.ndarray
    volume: float
    normals: np.ndarray = field(repr=False)
    offsets: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.volume < 0:
            raise ValueError("volume must be non-negative")
        if self.faces.size and self.faces.max() >= len(self.vertices):
            raise ValueError("face index out of range")
        for arr in (self.vertices, self.faces, self.normals, self.offsets):
            arr.setflags(write=False)


def _cloud_rank(points: np.ndarray) -> int:
    centered = points - points.mean(axis=0)
    svals = np.linalg.svd(centered, compute_uv=False)
    return int(np.sum(svals > RANK_TOL))


def convex_hull(cloud: PointCloud) -> ConvexPolytope:
    """Convex hull of a cloud; raises DegenerateCloud below full 3D rank.

    The volume is a signed-tetrahedron sum from the centroid over the
    triangulated faces (it agrees with the facet-based volume but keeps
    the computation explicit and orientation-checked).
    """
    pts = cloud.points
    if len(pts) < 4:
        raise DegenerateCloud(f"need at least 4 points, got {len(pts)}")
    if _cloud_rank(pts) < 3:
        raise DegenerateCloud("points are coplanar within tolerance")
    hull = ConvexHull(pts)

    # Re-index to the hull's own vertex set, sorted lexicographically for
    # run-to-run reproducibility.
    vert_ids = np.asarray(sorted(hull.vertices.tolist(),
                                 key=lambda i: tuple(pts[i])), dtype=int)
    vertices = pts[vert_ids].copy()
    remap = {old: new for new, old in enumerate(vert_ids)}
    faces = np.asarray([[remap[i] for i in simplex] for simplex in hull.simplices],
                       dtype=int)

    centroid = vertices.mean(axis=0)
    volume = 0.0
    oriented = []
    for tri in faces:
        a, b, c = vertices[tri]
        n = np.cross(b - a, c - a)
        # Orient every triangle outward from the interior centroid.
        if np.dot(n, a - centroid) < 0:
            tri = tri[[0, 2, 1]]
            a, b, c = vertices[tri]
        oriented.append(tri)
        volume += np.dot(a - centroid, np.cross(b - centroid, c - centroid)) / 6.0
    faces = np.asarray(oriented, dtype=int)

    normals = np.empty((len(faces), 3))
    offsets = np.empty(len(faces))
    for k, tri in enumerate(faces):
        a, b, c = vertices[tri]
        n = np.cross(b - a, c - a)
        n /= np.linalg.norm(n)
        normals[k] = n
        offsets[k] = np.dot(n, a)

    return ConvexPolytope(vertices=vertices, faces=faces, volume=float(volume),
                          normals=normals, offsets=offsets)


def contains(poly: ConvexPolytope, point, tol: float = CONTAIN_TOL) -> bool:
    """Half-space membership test with a boundary slack of `tol` meters."""
    p = np.asarray(point, dtype=float)
    return bool(np.all(poly.normals @ p <= poly.offsets + tol))


def contains_all(poly: ConvexPolytope, points, tol: float = CONTAIN_TOL) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.all(pts @ poly.normals.T <= poly.offsets + tol, axis=1)


# The ladder starts fine enough that thin single-module workspaces, whose
# surface-to-volume ratio is extreme, still have an in-band rung.
EPS_LADDER_START = 1e-4  # meters
EPS_LADDER_FACTOR = 1.25
EPS_LADDER_MAX = 0.5  # meters
VOLUME_BAND = 0.10  # relative mismatch allowed against the reference volume


def surface_area(poly: ConvexPolytope) -> float:
    total = 0.0
    for tri in poly.faces:
        a, b, c = poly.vertices[tri]
        total += 0.5 * np.linalg.norm(np.cross(b - a, c - a))
    return total


def _edge_curvature_integral(poly: ConvexPolytope) -> float:
    """Sum of edge_length * exterior_dihedral_angle / 2 over the hull edges."""
    edge_faces: dict[tuple[int, int], list[int]] = {}
    for k, tri in enumerate(poly.faces):
        for i in range(3):
            e = tuple(sorted((tri[i], tri[(i + 1) % 3])))
            edge_faces.setdefault(e, []).append(k)
    total = 0.0
    for (i, j), facets in edge_faces.items():
        if len(facets) != 2:
            continue
        n1, n2 = poly.normals[facets[0]], poly.normals[facets[1]]
        cos_angle = np.clip(n1 @ n2, -1.0, 1.0)
        exterior = np.arccos(cos_angle)
        length = np.linalg.norm(poly.vertices[i] - poly.vertices[j])
        total += 0.5 * length * exterior
    return total


def dilated_hull_volume(poly: ConvexPolytope, eps: float) -> float:
    """Volume of the hull dilated by an eps-ball (Steiner formula).

    This is the volume covered when every sampled point stands in for an
    eps-neighborhood, which is how the proximity threshold is used by the
    set operations.
    """
    s = surface_area(poly)
    m = _edge_curvature_integral(poly)
    return poly.volume + s * eps + m * eps ** 2 + (4.0 / 3.0) * np.pi * eps ** 3


def calibrate_epsilon(cloud: PointCloud, reference_volume: float) -> float:
    """Pick the proximity threshold that makes the cloud volumetrically honest.

    A sampled cloud under-covers the region it was drawn from, so its raw
    hull volume falls short of a high-density reference.  Walking a geometric
    ladder of eps values, return the smallest eps whose eps-dilated hull
    volume is within 10% of ``reference_volume``; that eps makes each point
    stand for the neighborhood it is expected to cover.
    """
    if reference_volume <= 0:
        raise ValueError("reference_volume must be positive")
    if len(cloud) < 4 or _cloud_rank(cloud.points) < 3:
        raise CalibrationFailed("cloud too small or degenerate to calibrate")

    poly = convex_hull(cloud)
    s = surface_area(poly)
    m = _edge_curvature_integral(poly)

    eps = EPS_LADDER_START
    while eps <= EPS_LADDER_MAX:
        vol = poly.volume + s * eps + m * eps ** 2 + (4.0 / 3.0) * np.pi * eps ** 3
        if abs(vol - reference_volume) <= VOLUME_BAND * reference_volume:
            return eps
        eps *= EPS_LADDER_FACTOR
    raise CalibrationFailed(
        f"no eps <= {EPS_LADDER_MAX} m reproduces the reference volume "
        f"{reference_volume:.6g} m^3 within 10%")


def polytope_to_off(poly: ConvexPolytope) -> str:
    """Serialize a polytope as OFF mesh text."""
    lines = ["OFF", f"{len(poly.vertices)} {len(poly.faces)} 0"]
    for v in poly.vertices:
        lines.append(f"{v[0]:.10g} {v[1]:.10g} {v[2]:.10g}")
    for f in poly.faces:
        lines.append(f"3 {f[0]} {f[1]} {f[2]}")
    return "\n".join(lines) + "\n"


def cloud_to_csv(cloud: PointCloud) -> str:
    """Serialize a cloud as CSV with an `x,y,z` header."""
    lines = ["x,y,z"]
    for p in cloud.points:
        lines.append(f"{p[0]:.10g},{p[1]:.10g},{p[2]:.10g}")
    return "\n".join(lines) + "\n"
