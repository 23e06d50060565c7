"""Safe-set geometry against closed forms, convex solvers, and grid oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.ndimage import distance_transform_edt

from stochsafe.geometry import (
    AxisBox,
    Ball,
    DimensionMismatchError,
    HalfspacePolytope,
    SafeSet,
    clearance_points,
    distance_to_obstacle,
    erosion_nonempty,
    in_eroded_set,
    min_obstacle_clearance,
    points_hit_obstacles,
)

THREE_DISCS = (
    Ball(center=np.array([1.5, 3.5]), radius=0.9),
    Ball(center=np.array([-0.5, 2.0]), radius=0.72),
    Ball(center=np.array([6.2, 0.7]), radius=0.75),
)


def _cross2(a, b):
    return a[0] * b[1] - a[1] * b[0]


def triangle_polytope(v1, v2, v3):
    """Halfspace form of a triangle with outward unit normals."""
    verts = [np.asarray(v, dtype=float) for v in (v1, v2, v3)]
    normals, offsets = [], []
    for i in range(3):
        a, b = verts[i], verts[(i + 1) % 3]
        other = verts[(i + 2) % 3]
        edge = b - a
        n = np.array([edge[1], -edge[0]])
        n /= np.linalg.norm(n)
        off = float(n @ a)
        if n @ other > off:  # make the third vertex satisfy n.x <= off
            n, off = -n, -off
        normals.append(n)
        offsets.append(off)
    return HalfspacePolytope(normals=np.array(normals), offsets=np.array(offsets))


class TestObstacleDistances:
    def test_ball_center_is_minus_radius(self):
        ball = Ball(center=np.array([0.0, 0.0]), radius=0.9)
        assert distance_to_obstacle(np.array([0.0, 0.0]), ball) == pytest.approx(-0.9)

    def test_ball_boundary_point(self):
        ball = Ball(center=np.array([1.5, 3.5]), radius=0.9)
        assert distance_to_obstacle(np.array([2.4, 3.5]), ball) == pytest.approx(0.0, abs=1e-15)

    def test_box_corner_distance(self):
        box = AxisBox(lower=np.array([1.0, 1.0]), upper=np.array([2.0, 2.0]))
        assert distance_to_obstacle(np.array([0.0, 0.0]), box) == pytest.approx(math.sqrt(2.0))

    def test_box_inside_signed_distance(self):
        box = AxisBox(lower=np.array([0.0, 0.0]), upper=np.array([4.0, 2.0]))
        # nearest face of the centered point is the long side, 1 away
        assert distance_to_obstacle(np.array([2.0, 1.0]), box) == pytest.approx(-1.0)

    def test_single_halfspace_distance_is_margin(self):
        half = HalfspacePolytope(normals=np.array([[1.0, 0.0]]), offsets=np.array([2.0]))
        assert distance_to_obstacle(np.array([5.0, 3.0]), half) == pytest.approx(3.0)
        assert distance_to_obstacle(np.array([1.0, -7.0]), half) == pytest.approx(-1.0)

    def test_normals_are_normalized_on_construction(self):
        half = HalfspacePolytope(normals=np.array([[3.0, 4.0]]), offsets=np.array([10.0]))
        assert np.allclose(np.linalg.norm(half.normals, axis=1), 1.0)
        # {3x + 4y <= 10} contains the origin at distance 2 from the plane
        assert distance_to_obstacle(np.array([0.0, 0.0]), half) == pytest.approx(-2.0)

    def test_triangle_inside_outside(self):
        tri = triangle_polytope([0, 0], [2, 0], [0, 2])
        assert distance_to_obstacle(np.array([0.4, 0.4]), tri) < 0
        # both query points project onto the vertex (2, 0)
        assert distance_to_obstacle(np.array([3.0, 0.5]), tri) == pytest.approx(
            math.sqrt(1.25), rel=1e-6
        )
        assert distance_to_obstacle(np.array([3.0, -1.0]), tri) == pytest.approx(
            math.sqrt(2.0), rel=1e-6
        )

    def test_polytope_projection_against_convex_solver(self):
        cp = pytest.importorskip("cvxpy")
        rng = np.random.default_rng(5)
        for _ in range(12):
            verts = rng.uniform(-1.0, 1.0, (3, 2))
            if abs(_cross2(verts[1] - verts[0], verts[2] - verts[0])) < 0.3:
                continue
            tri = triangle_polytope(*verts)
            for _ in range(6):
                x = rng.uniform(-2.0, 2.0, 2)
                y = cp.Variable(2)
                prob = cp.Problem(
                    cp.Minimize(cp.sum_squares(y - x)),
                    [tri.normals @ y <= tri.offsets],
                )
                prob.solve(solver="CLARABEL")
                oracle = float(np.linalg.norm(x - y.value))
                ours = distance_to_obstacle(x, tri)
                if ours >= 0:
                    assert ours == pytest.approx(oracle, abs=1e-6)

    def test_dimension_mismatch(self):
        ball = Ball(center=np.array([0.0, 0.0]), radius=1.0)
        with pytest.raises(DimensionMismatchError):
            distance_to_obstacle(np.array([1.0, 2.0, 3.0]), ball)

    def test_bounded_flags(self):
        tri = triangle_polytope([0, 0], [1, 0], [0, 1])
        assert tri.bounded
        half = HalfspacePolytope(normals=np.array([[1.0, 0.0]]), offsets=np.array([0.0]))
        assert not half.bounded

    def test_empty_polytope_rejected(self):
        with pytest.raises(ValueError):
            HalfspacePolytope(
                normals=np.array([[1.0, 0.0], [-1.0, 0.0]]), offsets=np.array([-1.0, -1.0])
            )

    def test_invalid_shapes_rejected(self):
        with pytest.raises(ValueError):
            Ball(center=np.array([0.0]), radius=0.0)
        with pytest.raises(ValueError):
            AxisBox(lower=np.array([1.0, 0.0]), upper=np.array([0.0, 1.0]))


class TestSafeSetQueries:
    def test_no_obstacles_always_eroded_member(self):
        s = SafeSet(obstacles=(), ambient_dim=2)
        assert min_obstacle_clearance(np.array([3.0, -7.0]), s) == math.inf
        assert in_eroded_set(np.array([3.0, -7.0]), s, 1e9)

    def test_collinear_ball_example(self):
        s = SafeSet(obstacles=(Ball(center=np.array([1.5, 3.5]), radius=0.9),), ambient_dim=2)
        x = np.array([3.0, 3.5])  # distance 1.5 to center, 0.6 to the disc
        assert in_eroded_set(x, s, 0.5)
        assert not in_eroded_set(x, s, 0.7)

    def test_three_disc_clearance_closed_form(self):
        s = SafeSet(obstacles=THREE_DISCS, ambient_dim=2)
        x = np.array([5.0, 5.0])
        expected = min(
            math.hypot(3.5, 1.5) - 0.9,
            math.hypot(5.5, 3.0) - 0.72,
            math.hypot(1.2, 4.3) - 0.75,
        )
        assert min_obstacle_clearance(x, s) == pytest.approx(expected, rel=1e-12)

    def test_inside_obstacle_is_negative(self):
        s = SafeSet(obstacles=THREE_DISCS, ambient_dim=2)
        assert min_obstacle_clearance(np.array([1.5, 3.5]), s) == pytest.approx(-0.9)

    def test_boundary_counts_safe_at_zero_erosion(self):
        s = SafeSet(obstacles=(Ball(center=np.array([0.0, 0.0]), radius=1.0),), ambient_dim=2)
        assert in_eroded_set(np.array([1.0, 0.0]), s, 0.0)
        assert not in_eroded_set(np.array([0.99, 0.0]), s, 0.0)

    def test_clearance_points_matches_scalar_path(self):
        rng = np.random.default_rng(2)
        s = SafeSet(obstacles=THREE_DISCS, ambient_dim=2)
        pts = rng.uniform(-2, 8, (200, 2))
        batch = clearance_points(pts, s)
        for i in range(0, 200, 17):
            assert batch[i] == pytest.approx(min_obstacle_clearance(pts[i], s), rel=1e-12)

    def test_points_hit_obstacles_strict_interior(self):
        s = SafeSet(obstacles=(Ball(center=np.array([0.0, 0.0]), radius=1.0),), ambient_dim=2)
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.01, 0.0]])
        assert points_hit_obstacles(pts, s).tolist() == [True, False, False]

    def test_cylindrical_projection(self):
        # planar obstacles in a 3-D state space: the third coordinate is free
        s = SafeSet(obstacles=THREE_DISCS, ambient_dim=3, spatial_coords=(0, 1))
        assert in_eroded_set(np.array([5.0, 5.0, 123.0]), s, 1.0)
        assert not in_eroded_set(np.array([1.5, 3.5, -3.0]), s, 0.0)

    def test_projection_soundness(self):
        # spatial-subspace clearance >= r implies full-state erosion membership:
        # the projection is 1-Lipschitz so full-state distances dominate
        rng = np.random.default_rng(9)
        s = SafeSet(obstacles=THREE_DISCS, ambient_dim=3, spatial_coords=(0, 1))
        s2d = SafeSet(obstacles=THREE_DISCS, ambient_dim=2)
        for _ in range(100):
            x = rng.uniform(-2, 8, 3)
            r = rng.uniform(0, 2)
            planar = min_obstacle_clearance(x[:2], s2d)
            if planar >= r:
                assert in_eroded_set(x, s, r)

    @settings(max_examples=50, deadline=None)
    @given(
        x=st.tuples(st.floats(-3, 9), st.floats(-3, 9)),
        r1=st.floats(0, 2),
        r2=st.floats(0, 2),
    )
    def test_erosion_monotonicity(self, x, r1, r2):
        lo, hi = min(r1, r2), max(r1, r2)
        s = SafeSet(obstacles=THREE_DISCS, ambient_dim=2)
        point = np.array(x)
        if in_eroded_set(point, s, hi):
            assert in_eroded_set(point, s, lo)

    @settings(max_examples=50, deadline=None)
    @given(x=st.tuples(st.floats(-3, 9), st.floats(-3, 9)), r=st.floats(0, 3))
    def test_set_identity_with_clearance(self, x, r):
        s = SafeSet(obstacles=THREE_DISCS, ambient_dim=2)
        point = np.array(x)
        assert in_eroded_set(point, s, r) == (min_obstacle_clearance(point, s) >= r)


class TestErosionNonempty:
    def test_no_obstacles(self):
        s = SafeSet(obstacles=(), ambient_dim=2)
        box = AxisBox(lower=np.array([0.0, 0.0]), upper=np.array([1.0, 1.0]))
        assert erosion_nonempty(s, 1e6, box)

    def test_witness_far_from_obstacle(self):
        s = SafeSet(obstacles=(Ball(center=np.array([0.0, 0.0]), radius=1.0),), ambient_dim=2)
        box = AxisBox(lower=np.array([20.0, 20.0]), upper=np.array([21.0, 21.0]))
        assert erosion_nonempty(s, 10.0, box)

    def test_no_witness_when_erosion_swallows_box(self):
        s = SafeSet(obstacles=(Ball(center=np.array([0.0, 0.0]), radius=1.0),), ambient_dim=2)
        box = AxisBox(lower=np.array([-0.5, -0.5]), upper=np.array([0.5, 0.5]))
        assert not erosion_nonempty(s, 5.0, box)

    def test_refinement_never_flips_true_to_false(self):
        # dyadic levels nest, so a coarse witness stays a fine witness
        rng = np.random.default_rng(4)
        box = AxisBox(lower=np.array([0.0, 0.0]), upper=np.array([4.0, 4.0]))
        for _ in range(20):
            c = rng.uniform(0, 4, 2)
            s = SafeSet(
                obstacles=(Ball(center=c, radius=rng.uniform(0.2, 1.5)),), ambient_dim=2
            )
            r = rng.uniform(0, 2)
            coarse = erosion_nonempty(s, r, box, levels=3)
            fine = erosion_nonempty(s, r, box, levels=6)
            if coarse:
                assert fine


def rasterized_clearance_oracle(safe_set, origin, h, shape):
    """Obstacle mask and distance field via rasterization + Euclidean EDT.

    Independent of the signed-distance code: membership uses direct
    inequalities per shape, distances come from scipy's distance transform.
    Eroded membership at radius r is (~mask) & (edt >= r): the mask excludes
    obstacle interiors, where the distance transform is 0.
    """
    ys, xs = np.meshgrid(
        origin[1] + h * np.arange(shape[1]),
        origin[0] + h * np.arange(shape[0]),
        indexing="xy",
    )
    pts = np.stack([xs.ravel(), ys.ravel()], axis=-1)
    mask = np.zeros(pts.shape[0], dtype=bool)
    for o in safe_set.obstacles:
        if isinstance(o, Ball):
            mask |= np.sum((pts - o.center) ** 2, axis=1) < o.radius**2
        elif isinstance(o, AxisBox):
            mask |= np.all((pts > o.lower) & (pts < o.upper), axis=1)
        else:
            mask |= np.all(pts @ o.normals.T - o.offsets < 0.0, axis=1)
    mask = mask.reshape(shape)
    return mask, distance_transform_edt(~mask, sampling=h)


def random_obstacle_union(rng, n_obstacles=3):
    obstacles = []
    for _ in range(n_obstacles):
        kind = rng.integers(0, 3)
        if kind == 0:
            obstacles.append(
                Ball(center=rng.uniform(0.2, 1.3, 2), radius=float(rng.uniform(0.08, 0.35)))
            )
        elif kind == 1:
            lo = rng.uniform(0.1, 1.1, 2)
            obstacles.append(AxisBox(lower=lo, upper=lo + rng.uniform(0.1, 0.5, 2)))
        else:
            while True:
                verts = rng.uniform(0.1, 1.4, (3, 2))
                if abs(_cross2(verts[1] - verts[0], verts[2] - verts[0])) > 0.05:
                    break
            obstacles.append(triangle_polytope(*verts))
    return SafeSet(obstacles=tuple(obstacles), ambient_dim=2)


class TestGridOracle:
    def test_agreement_with_inflated_obstacle_oracle(self):
        # smaller-scale version of the acceptance run: identical construction
        h = 1e-3
        origin = np.array([-0.6, -0.6])
        shape = (2701, 2701)  # covers [-0.6, 2.1]^2
        rng = np.random.default_rng(123)
        total = 0
        disagreements = 0
        for _ in range(8):
            s = random_obstacle_union(rng)
            mask, edt = rasterized_clearance_oracle(s, origin, h, shape)
            queries = rng.uniform(0.0, 1.5, (2000, 2))
            idx = np.rint((queries - origin) / h).astype(int)
            oracle_inside = mask[idx[:, 0], idx[:, 1]]
            oracle_dist = edt[idx[:, 0], idx[:, 1]]
            ours = clearance_points(queries, s)
            for r in (0.0, 0.1, 0.5):
                total += queries.shape[0]
                oracle_in = ~oracle_inside & (oracle_dist >= r)
                mismatch = (ours >= r) != oracle_in
                disagreements += int(np.count_nonzero(mismatch))
                # disagreements admissible only within a cell of the eroded boundary
                assert np.all(np.abs(ours[mismatch] - r) <= 2.5 * h)
        assert disagreements / total < 1e-3
