"""Update maps, built-in models, and the sampling-based gain estimator."""

import math

import numpy as np
import pytest

from stochsafe.dynamics import (
    DegenerateRegionError,
    InputBox,
    InputOutsideDomainError,
    InputVertices,
    UnicycleConfig,
    estimate_lipschitz,
    estimate_lipschitz_tube,
    make_linear_matrix,
    make_linear_scalar,
    make_model,
    make_unicycle,
    register_model,
    step,
    trajectory,
)
from stochsafe.geometry import AxisBox

UNICYCLE_START = np.array([5.0, 5.0, -math.pi / 3])


class TestStep:
    def test_linear_scalar_gain(self):
        model = make_linear_scalar(0.99)
        assert step(model, np.array([1.0]), None, 0) == pytest.approx(0.99)

    def test_identity_matrix_map(self):
        model = make_linear_matrix(np.eye(3))
        x = np.array([1.0, -2.0, 0.5])
        assert np.array_equal(step(model, x, None, 0), x)

    def test_zero_controller_unicycle_is_fixed_point(self):
        cfg = UnicycleConfig(speed_gain=0.0, steer_gain=0.0)
        model = make_unicycle(cfg)
        x = np.array([2.0, -1.0, 0.3])
        out = step(model, x, np.array([0.0]), 0)
        assert np.allclose(out, x)

    def test_input_outside_domain(self):
        model = make_unicycle()
        with pytest.raises(InputOutsideDomainError):
            step(model, UNICYCLE_START, np.array([0.5]), 0)
        with pytest.raises(InputOutsideDomainError):
            step(model, UNICYCLE_START, None, 0)


class TestTrajectory:
    def test_linear_zero_start_stays_zero(self):
        model = make_linear_scalar(0.99)
        traj = trajectory(model, np.array([0.0]), None, 50)
        assert traj.shape == (51, 1)
        assert np.all(traj == 0.0)

    def test_zero_horizon(self):
        model = make_linear_scalar(0.99)
        traj = trajectory(model, np.array([3.0]), None, 0)
        assert traj.shape == (1, 1) and traj[0, 0] == 3.0

    def test_unicycle_converges_toward_origin(self):
        model = make_unicycle()
        traj = trajectory(model, UNICYCLE_START, np.zeros((500, 1)), 500)
        start = np.linalg.norm(UNICYCLE_START[:2])
        end = np.linalg.norm(traj[-1, :2])
        assert end < 0.1 * start
        assert end < 0.2  # reaches the origin region within the horizon

    def test_bitwise_deterministic(self):
        model = make_unicycle()
        inputs = np.full((100, 1), 0.05)
        a = trajectory(model, UNICYCLE_START, inputs, 100)
        b = trajectory(model, UNICYCLE_START, inputs, 100)
        assert np.array_equal(a, b)

    def test_requires_enough_inputs(self):
        model = make_unicycle()
        with pytest.raises(ValueError):
            trajectory(model, UNICYCLE_START, np.zeros((5, 1)), 10)

    def test_angle_wraps_into_half_open_interval(self):
        cfg = UnicycleConfig(speed_gain=0.0, steer_gain=0.0)
        model = make_unicycle(cfg)
        x = np.array([1.0, 1.0, math.pi - 0.0005])
        out = step(model, x, np.array([0.1]), 0)
        assert -math.pi < out[2] <= math.pi


class TestEstimateLipschitz:
    def test_linear_scalar_exact_ratio(self):
        model = make_linear_scalar(0.99)
        region = AxisBox(lower=np.array([-1.0]), upper=np.array([1.0]))
        est = estimate_lipschitz(model, region, 0, samples=16, seed=0, inflation=1.0)
        assert est == pytest.approx(0.99, rel=1e-12)

    def test_default_inflation_applied(self):
        model = make_linear_scalar(0.99)
        region = AxisBox(lower=np.array([-1.0]), upper=np.array([1.0]))
        est = estimate_lipschitz(model, region, 0, samples=16, seed=0)
        assert est == pytest.approx(0.99 * 1.05, rel=1e-12)

    def test_identity_map(self):
        model = make_linear_matrix(np.eye(2))
        region = AxisBox(lower=-np.ones(2), upper=np.ones(2))
        est = estimate_lipschitz(model, region, 0, samples=32, seed=1, inflation=1.0)
        assert est == pytest.approx(1.0, rel=1e-12)

    def test_approaches_spectral_norm_from_below(self):
        rng = np.random.default_rng(8)
        region = AxisBox(lower=-np.ones(3), upper=np.ones(3))
        for _ in range(5):
            A = rng.normal(size=(3, 3))
            model = make_linear_matrix(A)
            spectral = np.linalg.svd(A, compute_uv=False)[0]
            est = estimate_lipschitz(model, region, 0, samples=20_000, seed=3, inflation=1.0)
            assert est <= spectral * (1 + 1e-12)
            assert est >= 0.9 * spectral

    def test_model_gain_matches_spectral_norm(self):
        A = np.array([[0.4, 0.3], [-0.2, 0.9]])
        model = make_linear_matrix(A)
        assert model.lipschitz_x == pytest.approx(np.linalg.svd(A, compute_uv=False)[0])

    def test_degenerate_region(self):
        model = make_linear_scalar()
        region = AxisBox(lower=np.array([1.0]), upper=np.array([1.0]))
        with pytest.raises(DegenerateRegionError):
            estimate_lipschitz(model, region, 0, samples=8)

    def test_statistically_monotone_in_samples(self):
        # median estimate over repetitions never decreases as samples double
        rng_seeds = range(20)
        A = np.array([[0.5, 0.8], [0.1, 1.1]])
        model = make_linear_matrix(A)
        region = AxisBox(lower=-np.ones(2), upper=np.ones(2))
        medians = []
        for samples in (16, 32, 64, 128):
            vals = [
                estimate_lipschitz(model, region, 0, samples, seed=s, inflation=1.0)
                for s in rng_seeds
            ]
            medians.append(np.median(vals))
        assert all(a <= b + 1e-12 for a, b in zip(medians, medians[1:]))

    def test_tube_estimate_near_one_for_unicycle(self):
        model = make_unicycle()
        L = estimate_lipschitz_tube(
            model, UNICYCLE_START, 50, halfwidth=0.4, samples=128, seed=0, inflation=1.0
        )
        assert L.shape == (50,)
        assert np.all(L > 0.95) and np.all(L < 1.05)


class TestInputSets:
    def test_box_center_radius_vertices(self):
        box = InputBox(lower=np.array([-0.1, 0.0]), upper=np.array([0.1, 0.4]))
        assert np.allclose(box.center, [0.0, 0.2])
        assert box.radius == pytest.approx(math.hypot(0.1, 0.2))
        assert box.vertices().shape == (4, 2)
        assert box.contains(np.array([0.05, 0.3]))
        assert not box.contains(np.array([0.2, 0.3]))

    def test_vertex_hull_membership(self):
        tri = InputVertices(points=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
        assert tri.contains(np.array([0.2, 0.2]))
        assert not tri.contains(np.array([0.7, 0.7]))
        assert tri.radius > 0


class TestRegistry:
    def test_builtin_names(self):
        assert make_model("linear_scalar").name == "linear_scalar"
        assert make_model("linear_matrix", {"matrix": [[0.5]]}).dim == 1
        assert make_model("unicycle").input_dim == 1

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            make_model("hovercraft")

    def test_unknown_unicycle_parameter(self):
        with pytest.raises(ValueError):
            make_model("unicycle", {"warp": 9})

    def test_register_custom(self):
        register_model("doubler_for_test", lambda params: make_linear_scalar(2.0))
        assert make_model("doubler_for_test").lipschitz_x == 2.0
        with pytest.raises(ValueError):
            register_model("doubler_for_test", lambda params: make_linear_scalar(2.0))
