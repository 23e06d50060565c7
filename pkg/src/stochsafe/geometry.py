"""Safe sets as complements of convex-obstacle unions, with erosion queries.

A safe set C is the complement of a finite union of convex obstacles (balls,
axis-aligned boxes, halfspace polytopes).  Membership in the eroded set
C shrunk by a ball of radius r reduces to a clearance test: the distance from
the query point to every obstacle must be at least r.  Obstacles may live in
a designated spatial subspace of the full state; the set is interpreted
cylindrically over the remaining coordinates.

Conventions: safe and eroded sets are closed, i.e. boundary points count as
members.  Signed distances are negative inside an obstacle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linprog

__all__ = [
    "DimensionMismatchError",
    "ConvexObstacle",
    "Ball",
    "AxisBox",
    "HalfspacePolytope",
    "SafeSet",
    "distance_to_obstacle",
    "min_obstacle_clearance",
    "clearance_points",
    "points_hit_obstacles",
    "in_eroded_set",
    "erosion_nonempty",
    "obstacle_from_dict",
    "obstacle_to_dict",
]


class DimensionMismatchError(ValueError):
    """Query point dimension does not match the obstacle or set dimension."""


def _check_dim(x: np.ndarray, dim: int, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1] != dim:
        raise DimensionMismatchError(
            f"{what} expects dimension {dim}, got point of dimension {arr.shape[-1]}"
        )
    return arr


class ConvexObstacle:
    """Common interface: signed Euclidean distance, negative inside."""

    dim: int

    def signed_distance(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def signed_distance_batch(self, points: np.ndarray) -> np.ndarray:
        """Signed distances for an (N, dim) array of points."""
        pts = _check_dim(points, self.dim, type(self).__name__)
        return np.array([self.signed_distance(p) for p in pts])

    def strictly_inside(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of points in the obstacle interior (boundary excluded)."""
        raise NotImplementedError


@dataclass(frozen=True)
class Ball(ConvexObstacle):
    center: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        center = np.asarray(self.center, dtype=float).reshape(-1)
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")
        center.setflags(write=False)
        object.__setattr__(self, "center", center)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def signed_distance(self, x: np.ndarray) -> float:
        x = _check_dim(x, self.dim, "Ball")
        return float(np.linalg.norm(x - self.center) - self.radius)

    def signed_distance_batch(self, points: np.ndarray) -> np.ndarray:
        pts = _check_dim(points, self.dim, "Ball")
        return np.linalg.norm(pts - self.center, axis=-1) - self.radius

    def strictly_inside(self, points: np.ndarray) -> np.ndarray:
        pts = _check_dim(points, self.dim, "Ball")
        return np.linalg.norm(pts - self.center, axis=-1) < self.radius


@dataclass(frozen=True)
class AxisBox(ConvexObstacle):
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape:
            raise ValueError("box bounds must have matching shapes")
        # equality allowed: boxes double as probe regions and point-like
        # initial sets; obstacle loading rejects zero-volume boxes separately
        if not np.all(lower <= upper):
            raise ValueError("box requires lower <= upper componentwise")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def has_volume(self) -> bool:
        return bool(np.all(self.lower < self.upper))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def circumradius(self) -> float:
        return float(np.linalg.norm(0.5 * (self.upper - self.lower)))

    def signed_distance(self, x: np.ndarray) -> float:
        return float(self.signed_distance_batch(np.asarray(x, dtype=float)[None, :])[0])

    def signed_distance_batch(self, points: np.ndarray) -> np.ndarray:
        pts = _check_dim(points, self.dim, "AxisBox")
        # q_i < 0 strictly inside along axis i, > 0 outside
        q = np.maximum(self.lower - pts, pts - self.upper)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    def strictly_inside(self, points: np.ndarray) -> np.ndarray:
        pts = _check_dim(points, self.dim, "AxisBox")
        return np.all((pts > self.lower) & (pts < self.upper), axis=-1)

    def grid(self, points_per_axis: int) -> np.ndarray:
        """Regular grid over the box including its faces, as an (N, dim) array."""
        axes = [
            np.linspace(self.lower[i], self.upper[i], points_per_axis)
            for i in range(self.dim)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(size, self.dim))

    def corners(self) -> np.ndarray:
        combos = list(itertools.product(*zip(self.lower, self.upper)))
        return np.array(combos, dtype=float)


def _polytope_feasible_and_bounded(normals: np.ndarray, offsets: np.ndarray) -> tuple[bool, bool]:
    # Feasibility and boundedness probes via small LPs; obstacles here are
    # low-dimensional so this is cheap and happens once at construction.
    k, d = normals.shape
    res = linprog(c=np.zeros(d), A_ub=normals, b_ub=offsets, bounds=[(None, None)] * d)
    feasible = res.status == 0
    bounded = True
    if feasible:
        for i in range(d):
            for sign in (1.0, -1.0):
                c = np.zeros(d)
                c[i] = -sign  # maximize sign * x_i
                res = linprog(c=c, A_ub=normals, b_ub=offsets, bounds=[(None, None)] * d)
                if res.status == 3:
                    bounded = False
                    break
            if not bounded:
                break
    return feasible, bounded


def _dykstra_project(
    points: np.ndarray,
    normals: np.ndarray,
    offsets: np.ndarray,
    tol: float = 1e-9,
    max_iter: int = 10_000,
) -> np.ndarray:
    """Projections of an (N, d) batch onto {y : N y <= b}.

    Dykstra's alternating projections with per-halfspace correction terms,
    which converge to the true Euclidean projection (plain cyclic projection
    only finds some feasible point).  All rows iterate together.
    """
    y = points.copy()
    k = normals.shape[0]
    corrections = np.zeros((k,) + points.shape)
    for _ in range(max_iter):
        shift = 0.0
        for i in range(k):
            z = y + corrections[i]
            margin = z @ normals[i] - offsets[i]
            y_new = z - np.maximum(margin, 0.0)[..., None] * normals[i]
            corrections[i] = z - y_new
            shift = max(shift, float(np.max(np.abs(y_new - y))))
            y = y_new
        if shift <= tol and float(np.max(y @ normals.T - offsets)) <= tol:
            break
    return y


@dataclass(frozen=True)
class HalfspacePolytope(ConvexObstacle):
    """Intersection of halfspaces {x : n_i . x <= b_i} with unit normals."""

    normals: np.ndarray
    offsets: np.ndarray
    bounded: bool = field(default=False)

    def __post_init__(self) -> None:
        normals = np.atleast_2d(np.asarray(self.normals, dtype=float))
        offsets = np.asarray(self.offsets, dtype=float).reshape(-1)
        if normals.shape[0] != offsets.shape[0]:
            raise ValueError("need one offset per normal")
        norms = np.linalg.norm(normals, axis=1)
        if np.any(norms == 0.0):
            raise ValueError("zero normal vector in polytope description")
        normals = normals / norms[:, None]
        offsets = offsets / norms
        feasible, bounded = _polytope_feasible_and_bounded(normals, offsets)
        if not feasible:
            raise ValueError("polytope is empty")
        normals.setflags(write=False)
        offsets.setflags(write=False)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "bounded", bounded)

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    def margins(self, x: np.ndarray) -> np.ndarray:
        return self.normals @ np.asarray(x, dtype=float) - self.offsets

    def signed_distance(self, x: np.ndarray) -> float:
        x = _check_dim(x, self.dim, "HalfspacePolytope")
        return float(self.signed_distance_batch(x[None, :])[0])

    def signed_distance_batch(self, points: np.ndarray) -> np.ndarray:
        pts = _check_dim(points, self.dim, "HalfspacePolytope")
        margins = pts @ self.normals.T - self.offsets
        # inside: the largest inscribed ball radius at x is -max margin
        worst = np.max(margins, axis=-1)
        if self.normals.shape[0] == 1:
            return worst
        out = worst.copy()
        outside = np.nonzero(worst > 0.0)[0]
        if outside.size:
            proj = _dykstra_project(pts[outside], self.normals, self.offsets)
            out[outside] = np.linalg.norm(pts[outside] - proj, axis=-1)
        return out

    def strictly_inside(self, points: np.ndarray) -> np.ndarray:
        pts = _check_dim(points, self.dim, "HalfspacePolytope")
        margins = pts @ self.normals.T - self.offsets
        return np.all(margins < 0.0, axis=-1)


@dataclass(frozen=True)
class SafeSet:
    """Complement of a union of convex obstacles, cylindrical over non-spatial axes."""

    obstacles: tuple[ConvexObstacle, ...]
    ambient_dim: int
    spatial_coords: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        obstacles = tuple(self.obstacles)
        object.__setattr__(self, "obstacles", obstacles)
        coords = self.spatial_coords
        if coords is None:
            coords = tuple(range(self.ambient_dim))
        else:
            coords = tuple(int(c) for c in coords)
            if any(c < 0 or c >= self.ambient_dim for c in coords):
                raise ValueError("spatial_coords out of range")
            if len(set(coords)) != len(coords):
                raise ValueError("spatial_coords must be distinct")
        object.__setattr__(self, "spatial_coords", coords)
        for o in obstacles:
            if o.dim != len(coords):
                raise DimensionMismatchError(
                    f"obstacle dimension {o.dim} != spatial dimension {len(coords)}"
                )

    @property
    def spatial_dim(self) -> int:
        return len(self.spatial_coords)

    def project(self, x: np.ndarray) -> np.ndarray:
        arr = _check_dim(x, self.ambient_dim, "SafeSet")
        return arr[..., list(self.spatial_coords)]


def distance_to_obstacle(x: np.ndarray, obstacle: ConvexObstacle) -> float:
    """Signed Euclidean distance from a point (in obstacle coordinates)."""
    return obstacle.signed_distance(np.asarray(x, dtype=float))


def min_obstacle_clearance(x: np.ndarray, safe_set: SafeSet) -> float:
    """Smallest signed distance to any obstacle; +inf when there are none."""
    if not safe_set.obstacles:
        return math.inf
    p = safe_set.project(np.asarray(x, dtype=float))
    return min(o.signed_distance(p) for o in safe_set.obstacles)


def clearance_points(points: np.ndarray, safe_set: SafeSet) -> np.ndarray:
    """Vectorized :func:`min_obstacle_clearance` for an (N, ambient_dim) array."""
    pts = np.asarray(points, dtype=float)
    if not safe_set.obstacles:
        return np.full(pts.shape[0], math.inf)
    proj = safe_set.project(pts)
    dists = np.stack([o.signed_distance_batch(proj) for o in safe_set.obstacles])
    return np.min(dists, axis=0)


def points_hit_obstacles(points: np.ndarray, safe_set: SafeSet) -> np.ndarray:
    """Mask of points strictly inside some obstacle (the unsafe event)."""
    pts = np.asarray(points, dtype=float)
    if not safe_set.obstacles:
        return np.zeros(pts.shape[0], dtype=bool)
    proj = safe_set.project(pts)
    hit = np.zeros(pts.shape[0], dtype=bool)
    for o in safe_set.obstacles:
        hit |= o.strictly_inside(proj)
    return hit


def in_eroded_set(x: np.ndarray, safe_set: SafeSet, r: float) -> bool:
    """Membership in the safe set eroded by a ball of radius r.

    True iff the spatial projection of x clears every obstacle by at least r;
    r = 0 reduces to plain safe-set membership with the boundary counted safe.
    """
    if r < 0:
        raise ValueError("erosion radius must be nonnegative")
    return min_obstacle_clearance(x, safe_set) >= r


def erosion_nonempty(
    safe_set: SafeSet,
    r: float,
    probe_box: AxisBox,
    levels: int = 6,
) -> bool:
    """Search a dyadic grid over probe_box for a witness of the eroded set.

    True means a witness point was found; False only means no witness was
    found at this resolution, not a proof of emptiness.  Grids are nested
    (level k+1 contains level k), so refining never flips True to False.
    """
    if probe_box.dim != safe_set.ambient_dim:
        raise DimensionMismatchError("probe box must live in the ambient space")
    if not safe_set.obstacles:
        return True
    for level in range(levels + 1):
        pts = probe_box.grid(2**level + 1)
        if np.any(clearance_points(pts, safe_set) >= r):
            return True
    return False


def obstacle_from_dict(record: dict) -> ConvexObstacle:
    """Build an obstacle from a tagged record as found in experiment configs."""
    kind = record.get("type")
    if kind == "ball":
        return Ball(center=np.asarray(record["center"], dtype=float), radius=float(record["radius"]))
    if kind == "axis_box":
        box = AxisBox(
            lower=np.asarray(record["lower"], dtype=float),
            upper=np.asarray(record["upper"], dtype=float),
        )
        if not box.has_volume:
            raise ValueError("axis_box obstacle requires lower < upper componentwise")
        return box
    if kind == "halfspace_polytope":
        return HalfspacePolytope(
            normals=np.asarray(record["normals"], dtype=float),
            offsets=np.asarray(record["offsets"], dtype=float),
        )
    raise ValueError(f"unknown obstacle type {kind!r}")


def obstacle_to_dict(obstacle: ConvexObstacle) -> dict:
    if isinstance(obstacle, Ball):
        return {"type": "ball", "center": obstacle.center.tolist(), "radius": obstacle.radius}
    if isinstance(obstacle, AxisBox):
        return {"type": "axis_box", "lower": obstacle.lower.tolist(), "upper": obstacle.upper.tolist()}
    if isinstance(obstacle, HalfspacePolytope):
        return {
            "type": "halfspace_polytope",
            "normals": obstacle.normals.tolist(),
            "offsets": obstacle.offsets.tolist(),
        }
    raise TypeError(f"unsupported obstacle {type(obstacle).__name__}")
