"""Noise families, paired simulation, and empirical bound validation."""

import math

import numpy as np
import pytest

from stochsafe.dynamics import make_linear_scalar, make_unicycle
from stochsafe.gap_bound import ConcentrationConstants, ScheduleSpec, capital_psi, gap_profile
from stochsafe.geometry import Ball, SafeSet
from stochsafe.montecarlo import (
    NoiseFamily,
    clopper_pearson,
    estimate_failure,
    gap_batch,
    noise_block,
    noise_stream,
    sample_noise,
    simulate_pair,
    sup_abs_statistics,
    validate_gap_profile,
    variance_schedule,
)


class TestNoiseFamilies:
    def test_zero_variance_gaussian_draws_zero(self):
        fam = NoiseFamily.gaussian(0.0, dimension=3)
        draw = sample_noise(fam, 0, noise_stream(1, 0, 0))
        assert np.array_equal(draw, np.zeros(3))

    def test_uniform_ball_mean_and_support(self):
        rho = 0.7
        fam = NoiseFamily.uniform_ball(rho, dimension=2)
        draws = noise_block(fam, 0, seed=9, trials=1_000_000)
        norms = np.linalg.norm(draws, axis=1)
        assert float(norms.max()) <= rho
        lln_tol = 3 * rho / math.sqrt(draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0)) <= lln_tol)

    def test_rademacher_support_and_mean(self):
        fam = NoiseFamily.scaled_rademacher(0.25, dimension=2)
        draws = noise_block(fam, 0, seed=3, trials=100_000)
        assert set(np.unique(draws)) == {-0.25, 0.25}
        assert np.all(np.abs(draws.mean(axis=0)) < 0.005)

    def test_custom_bounded_default_sphere(self):
        fam = NoiseFamily.custom_bounded(0.5, dimension=3)
        draws = noise_block(fam, 0, seed=3, trials=10_000)
        assert np.allclose(np.linalg.norm(draws, axis=1), 0.5)

    def test_unicycle_noise_scaling(self):
        # sqrt(eta)-scaled base variance 0.01 gives per-step proxy eta * 0.01
        eta = 0.01
        fam = NoiseFamily.gaussian(0.01, dimension=3, scale=math.sqrt(eta))
        assert fam.variance_proxy(0) == pytest.approx(eta * 0.01)
        draws = noise_block(fam, 0, seed=5, trials=200_000)
        assert np.var(draws[:, 0]) == pytest.approx(1e-4, rel=0.02)

    def test_variance_proxies(self):
        assert NoiseFamily.gaussian(0.3, 2).variance_proxy(0) == pytest.approx(0.3)
        assert NoiseFamily.uniform_ball(0.5, 2).variance_proxy(0) == pytest.approx(0.25)
        assert NoiseFamily.scaled_rademacher(0.5, 2).variance_proxy(0) == pytest.approx(0.25)

    def test_per_step_scale_schedule(self):
        fam = NoiseFamily.gaussian(1.0, 1, scale=np.array([1.0, 2.0, 0.0]))
        assert variance_schedule(fam, 3).tolist() == [1.0, 4.0, 0.0]
        assert np.array_equal(noise_block(fam, 2, seed=0, trials=4), np.zeros((4, 1)))

    def test_distinct_streams_are_independent_draws(self):
        fam = NoiseFamily.gaussian(1.0, 1)
        a = noise_block(fam, 0, seed=0, trials=1000)
        b = noise_block(fam, 1, seed=0, trials=1000)
        assert abs(float(np.corrcoef(a[:, 0], b[:, 0])[0, 1])) < 0.1


class TestSimulatePair:
    def test_zero_noise_zero_gap(self):
        model = make_linear_scalar(0.99)
        fam = NoiseFamily.gaussian(0.0, 1)
        X, x, gap = simulate_pair(model, fam, np.array([1.0]), None, 30, seed=0)
        assert np.array_equal(X, x)
        assert np.all(gap == 0.0)

    def test_gap_starts_at_zero(self):
        model = make_unicycle()
        fam = NoiseFamily.gaussian(0.01, 3, scale=0.1)
        X, x, gap = simulate_pair(model, fam, np.array([5.0, 5.0, -1.0]), None, 10, seed=4)
        assert gap[0] == 0.0
        assert np.array_equal(X[0], x[0])
        assert gap[5] == pytest.approx(np.linalg.norm(X[5] - x[5]))

    def test_scalar_linear_gap_variance_matches_accumulator(self):
        model = make_linear_scalar(0.99)
        fam = NoiseFamily.gaussian(1e-3, 1)
        sched = ScheduleSpec.constant(100, 0.99, 1e-3)
        X, x, _ = gap_batch(
            model, fam, np.zeros(1), None, 100, trials=100_000, seed=11, keep_states=True
        )
        diffs = X[:, :, 0] - x[:, :, 0]
        for t in (10, 50, 100):
            assert np.var(diffs[:, t]) == pytest.approx(capital_psi(sched, t), rel=0.05)


class TestEstimateFailure:
    def test_no_obstacles_no_failures(self):
        model = make_linear_scalar(0.99)
        fam = NoiseFamily.gaussian(1e-3, 1)
        safe = SafeSet(obstacles=(), ambient_dim=1)
        res = estimate_failure(model, fam, safe, np.zeros(1), None, 50, 500, seed=0)
        assert res.failures == 0
        assert res.empirical_delta == 0.0
        assert res.ci_low == 0.0 and res.ci_high < 0.01

    def test_reproducible_bitwise(self):
        model = make_unicycle()
        fam = NoiseFamily.gaussian(0.01, 3, scale=0.1)
        safe = SafeSet(
            obstacles=(Ball(center=np.array([4.0, 4.0]), radius=0.5),),
            ambient_dim=3,
            spatial_coords=(0, 1),
        )
        x0 = np.array([5.0, 5.0, -1.0])
        a = estimate_failure(model, fam, safe, x0, None, 60, 2000, seed=7)
        b = estimate_failure(model, fam, safe, x0, None, 60, 2000, seed=7)
        assert a == b

    def test_trial_count_validation(self):
        model = make_linear_scalar()
        fam = NoiseFamily.gaussian(1e-3, 1)
        safe = SafeSet(obstacles=(), ambient_dim=1)
        with pytest.raises(ValueError):
            estimate_failure(model, fam, safe, np.zeros(1), None, 10, 0, seed=0)

    def test_clopper_pearson_known_values(self):
        lo, hi = clopper_pearson(0, 100)
        assert lo == 0.0
        # 1 - (1 - hi)^100 = 0.975 at the upper endpoint
        assert hi == pytest.approx(1 - 0.025 ** (1 / 100), rel=1e-10)
        lo2, hi2 = clopper_pearson(100, 100)
        assert hi2 == 1.0


class TestValidateGapProfile:
    def test_zero_noise_profile_never_exceeded(self):
        model = make_linear_scalar(0.99)
        fam = NoiseFamily.gaussian(0.0, 1)
        sched = ScheduleSpec.constant(20, 0.99, 0.0)
        prof = gap_profile(sched, ConcentrationConstants.for_dimension(1), 0.1)
        out = validate_gap_profile(model, fam, prof, trials=200, seed=0)
        assert out.sup_exceedance == 0.0
        assert np.all(out.per_step_exceedance == 0.0)
        assert out.validated

    def test_linear_benchmark_within_budget(self):
        model = make_linear_scalar(0.99)
        fam = NoiseFamily.gaussian(1e-3, 1)
        sched = ScheduleSpec.constant(100, 0.99, 1e-3)
        prof = gap_profile(sched, ConcentrationConstants.for_dimension(1), 0.1)
        out = validate_gap_profile(model, fam, prof, trials=100_000, seed=21)
        assert out.sup_exceedance <= 0.1 + out.tolerance
        assert out.validated

    def test_worst_case_profile_exceeded_no_more_than_sharp(self):
        model = make_linear_scalar(0.99)
        fam = NoiseFamily.gaussian(1e-3, 1)
        sched = ScheduleSpec.constant(50, 0.99, 1e-3)
        cc = ConcentrationConstants.for_dimension(1)
        sharp = validate_gap_profile(model, fam, gap_profile(sched, cc, 0.5), 20_000, seed=2)
        worst = validate_gap_profile(
            model, fam, gap_profile(sched, cc, 0.5, "worst_case"), 20_000, seed=2
        )
        assert worst.sup_exceedance <= sharp.sup_exceedance


class TestSupAbsStatistics:
    def test_monotone_failure_curve(self):
        model = make_linear_scalar(0.99)
        fam = NoiseFamily.gaussian(1e-3, 1)
        sup = sup_abs_statistics(model, fam, np.zeros(1), 100, 50_000, seed=3)
        grid = np.linspace(0.0, 1.2, 25)
        deltas = [(sup > R).mean() for R in grid]
        assert all(a >= b for a, b in zip(deltas, deltas[1:]))
        assert deltas[0] == 1.0

    def test_matches_estimate_failure_on_interval(self):
        from stochsafe.verifier import interval_safe_set

        model = make_linear_scalar(0.99)
        fam = NoiseFamily.gaussian(1e-3, 1)
        R = 0.55
        sup = sup_abs_statistics(model, fam, np.zeros(1), 100, 20_000, seed=5)
        res = estimate_failure(
            model, fam, interval_safe_set(R), np.zeros(1), None, 100, 20_000, seed=5
        )
        assert res.empirical_delta == pytest.approx(float((sup > R).mean()), abs=1e-12)
