"""Sub-Gaussian noise sampling, stochastic simulation, empirical validation.

Simulation pairs a stochastic trajectory X_t with its associated deterministic
trajectory x_t (same initial state, same input sequence) and tracks the gap
g_t = ||X_t - x_t||, so that the analytic gap radii and failure probabilities
can be checked empirically.

Reproducibility: all randomness flows through counter-based Philox streams
keyed by (seed, purpose, step).  A step's noise for the whole trial batch is
one deterministic block draw with trials as rows, so results are independent
of how work is scheduled and identical seeds give bitwise identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy.stats import beta

from .dynamics import SystemModel
from .gap_bound import GapProfile, ScheduleSpec
from .geometry import SafeSet, points_hit_obstacles

__all__ = [
    "NoiseFamily",
    "SimulationResult",
    "GapValidation",
    "noise_stream",
    "sample_noise",
    "noise_block",
    "variance_schedule",
    "simulate_pair",
    "gap_batch",
    "estimate_failure",
    "validate_gap_profile",
    "sup_abs_statistics",
    "clopper_pearson",
]

NoiseKind = Literal["gaussian", "uniform_ball", "scaled_rademacher", "custom_bounded"]

# purpose tags for stream keys
_PURPOSE_NOISE = 0
_PURPOSE_INPUT = 1
_PURPOSE_INITIAL = 2


@dataclass(frozen=True)
class NoiseFamily:
    """A zero-mean sub-Gaussian noise family with a computable variance proxy.

    kinds and their per-draw proxies (before per-step scaling):
      gaussian(sigma2)          -> sigma2 (isotropic, per coordinate)
      uniform_ball(radius)      -> radius^2 (bounded support)
      scaled_rademacher(scale)  -> scale^2 (coordinatewise +/- scale)
      custom_bounded(radius)    -> radius^2 (user sampler with bounded support;
                                   defaults to the uniform sphere surface)

    scale is either a scalar or a per-step schedule s_t; the draw at step t is
    multiplied by s_t and the proxy by s_t^2.
    """

    kind: NoiseKind
    dimension: int
    param: float
    scale: float | np.ndarray = 1.0
    sampler: Callable[[np.random.Generator, int], np.ndarray] | None = None

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if self.param < 0:
            raise ValueError("noise parameter must be nonnegative")
        if np.ndim(self.scale) > 0:
            arr = np.asarray(self.scale, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, "scale", arr)

    @classmethod
    def gaussian(cls, sigma2: float, dimension: int = 1, scale: float | np.ndarray = 1.0):
        return cls(kind="gaussian", dimension=dimension, param=sigma2, scale=scale)

    @classmethod
    def uniform_ball(cls, radius: float, dimension: int = 1, scale: float | np.ndarray = 1.0):
        return cls(kind="uniform_ball", dimension=dimension, param=radius, scale=scale)

    @classmethod
    def scaled_rademacher(cls, scale_value: float, dimension: int = 1, scale=1.0):
        return cls(kind="scaled_rademacher", dimension=dimension, param=scale_value, scale=scale)

    @classmethod
    def custom_bounded(
        cls,
        support_radius: float,
        dimension: int = 1,
        sampler: Callable[[np.random.Generator, int], np.ndarray] | None = None,
        scale: float | np.ndarray = 1.0,
    ):
        return cls(
            kind="custom_bounded",
            dimension=dimension,
            param=support_radius,
            scale=scale,
            sampler=sampler,
        )

    def scale_at(self, t: int) -> float:
        if np.ndim(self.scale) == 0:
            return float(self.scale)
        return float(np.asarray(self.scale)[t])

    def variance_proxy(self, t: int = 0) -> float:
        """Sub-Gaussian variance proxy of the step-t draw."""
        base = self.param if self.kind == "gaussian" else self.param**2
        return self.scale_at(t) ** 2 * base

    def _raw_draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        n = self.dimension
        if self.kind == "gaussian":
            return math.sqrt(self.param) * rng.standard_normal((size, n))
        if self.kind == "uniform_ball":
            direction = rng.standard_normal((size, n))
            norms = np.linalg.norm(direction, axis=1, keepdims=True)
            norms[norms == 0.0] = 1.0
            radii = self.param * rng.random((size, 1)) ** (1.0 / n)
            return radii * direction / norms
        if self.kind == "scaled_rademacher":
            return self.param * (2.0 * rng.integers(0, 2, size=(size, n)) - 1.0)
        if self.kind == "custom_bounded":
            if self.sampler is not None:
                draw = np.asarray(self.sampler(rng, size), dtype=float)
                if draw.shape != (size, n):
                    raise ValueError("custom sampler returned wrong shape")
                return draw
            direction = rng.standard_normal((size, n))
            norms = np.linalg.norm(direction, axis=1, keepdims=True)
            norms[norms == 0.0] = 1.0
            return self.param * direction / norms
        raise ValueError(f"unknown noise kind {self.kind!r}")


def noise_stream(seed: int, purpose: int, t: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, purpose, step)."""
    key = np.array([np.uint64(seed), np.uint64((purpose << 48) + t)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_noise(family: NoiseFamily, t: int, stream: np.random.Generator) -> np.ndarray:
    """One step-t draw from an explicit stream."""
    return family.scale_at(t) * family._raw_draw(stream, 1)[0]


def noise_block(family: NoiseFamily, t: int, seed: int, trials: int) -> np.ndarray:
    """Step-t draws for a whole trial batch; row i belongs to trial i."""
    rng = noise_stream(seed, _PURPOSE_NOISE, t)
    return family.scale_at(t) * family._raw_draw(rng, trials)


def variance_schedule(family: NoiseFamily, horizon: int) -> np.ndarray:
    return np.array([family.variance_proxy(t) for t in range(horizon)])


def schedule_from_noise(
    lipschitz: np.ndarray | float, family: NoiseFamily, horizon: int
) -> ScheduleSpec:
    """Convenience: pair a gain schedule with the family's proxy schedule."""
    if np.ndim(lipschitz) == 0:
        lip = np.full(horizon, float(lipschitz))
    else:
        lip = np.asarray(lipschitz, dtype=float)[:horizon]
    return ScheduleSpec(horizon=horizon, lipschitz=lip, variance_proxy=variance_schedule(family, horizon))


def _input_blocks(
    model: SystemModel, horizon: int, trials: int, seed: int, inputs
) -> list[np.ndarray | None]:
    """Per-step input batches: a shared explicit sequence, or uniform draws from D."""
    if model.input_dim == 0:
        return [None] * horizon
    if inputs is not None:
        fixed = np.asarray(inputs, dtype=float).reshape(horizon, model.input_dim)
        return [np.broadcast_to(fixed[t], (trials, model.input_dim)) for t in range(horizon)]
    blocks = []
    for t in range(horizon):
        rng = noise_stream(seed, _PURPOSE_INPUT, t)
        blocks.append(model.input_set.sample(rng, trials))
    return blocks


def _advance(model: SystemModel, states: np.ndarray, d_block, t: int) -> np.ndarray:
    try:
        out = np.asarray(model.update(states, d_block, t), dtype=float)
        if out.shape == states.shape:
            return out
    except Exception:
        pass
    # update not batch-aware: fall back to one row at a time
    out = np.empty_like(states)
    for i in range(states.shape[0]):
        d = None if d_block is None else d_block[i]
        out[i] = model.update(states[i], d, t)
    return out


def simulate_pair(
    model: SystemModel,
    family: NoiseFamily,
    x0: np.ndarray,
    inputs,
    horizon: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One stochastic trajectory, its associated deterministic one, and the gap.

    Both trajectories share x0 and the input sequence, so g_0 = 0 and
    g_t = ||X_t - x_t|| isolates the accumulated effect of the noise.
    """
    X, x, gap = gap_batch(model, family, x0, inputs, horizon, trials=1, seed=seed, keep_states=True)
    return X[0], x[0], gap[0]


def gap_batch(
    model: SystemModel,
    family: NoiseFamily,
    x0: np.ndarray,
    inputs,
    horizon: int,
    trials: int,
    seed: int,
    keep_states: bool = False,
):
    """Gap sequences g_t for a batch of associated trajectory pairs.

    Returns (trials, horizon+1) gaps, or (X, x, gaps) with full state arrays
    of shape (trials, horizon+1, n) when keep_states is set.  Inputs may be an
    explicit (horizon, m) sequence shared by every trial, or None to draw one
    admissible input sequence per trial.
    """
    if family.dimension != model.dim:
        raise ValueError("noise dimension must match the state dimension")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    Xs = np.broadcast_to(x0, (trials, model.dim)).copy()
    xs = Xs.copy()
    gaps = np.zeros((trials, horizon + 1))
    d_blocks = _input_blocks(model, horizon, trials, seed, inputs)
    if keep_states:
        X_hist = np.empty((trials, horizon + 1, model.dim))
        x_hist = np.empty((trials, horizon + 1, model.dim))
        X_hist[:, 0] = Xs
        x_hist[:, 0] = xs
    for t in range(horizon):
        w = noise_block(family, t, seed, trials)
        Xs = _advance(model, Xs, d_blocks[t], t) + w
        xs = _advance(model, xs, d_blocks[t], t)
        gaps[:, t + 1] = np.linalg.norm(Xs - xs, axis=1)
        if keep_states:
            X_hist[:, t + 1] = Xs
            x_hist[:, t + 1] = xs
    if keep_states:
        return X_hist, x_hist, gaps
    return gaps


def clopper_pearson(failures: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval for the failure probability."""
    if trials < 1:
        raise ValueError("trials must be positive")
    alpha = 1.0 - confidence
    lo = 0.0 if failures == 0 else float(beta.ppf(alpha / 2, failures, trials - failures + 1))
    hi = 1.0 if failures == trials else float(beta.ppf(1 - alpha / 2, failures + 1, trials - failures))
    return lo, hi


@dataclass(frozen=True)
class SimulationResult:
    """Empirical failure estimate, optionally with per-step gap quantiles."""

    trials: int
    failures: int
    empirical_delta: float
    ci_low: float
    ci_high: float
    seed: int
    ci_method: str = "clopper-pearson-95"
    gap_quantiles: dict[str, np.ndarray] | None = None


def estimate_failure(
    model: SystemModel,
    family: NoiseFamily,
    safe_set: SafeSet,
    x0_sampler,
    input_sampler,
    horizon: int,
    trials: int,
    seed: int,
) -> SimulationResult:
    """Fraction of stochastic trajectories that leave the safe set by time T.

    x0_sampler is either a fixed state or a callable (rng, size) -> (size, n);
    input_sampler is None (draw uniformly from D per trial and step), a fixed
    (horizon, m) sequence, or a callable (rng, t, size) -> (size, m).
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng0 = noise_stream(seed, _PURPOSE_INITIAL, 0)
    if callable(x0_sampler):
        states = np.asarray(x0_sampler(rng0, trials), dtype=float)
    else:
        states = np.broadcast_to(np.asarray(x0_sampler, dtype=float), (trials, model.dim)).copy()
    failed = points_hit_obstacles(states, safe_set)
    for t in range(horizon):
        if model.input_dim == 0:
            d_block = None
        elif input_sampler is None:
            d_block = model.input_set.sample(noise_stream(seed, _PURPOSE_INPUT, t), trials)
        elif callable(input_sampler):
            d_block = np.asarray(input_sampler(noise_stream(seed, _PURPOSE_INPUT, t), t, trials))
        else:
            fixed = np.asarray(input_sampler, dtype=float).reshape(horizon, model.input_dim)
            d_block = np.broadcast_to(fixed[t], (trials, model.input_dim))
        states = _advance(model, states, d_block, t) + noise_block(family, t, seed, trials)
        failed |= points_hit_obstacles(states, safe_set)
    failures = int(np.count_nonzero(failed))
    lo, hi = clopper_pearson(failures, trials)
    return SimulationResult(
        trials=trials,
        failures=failures,
        empirical_delta=failures / trials,
        ci_low=lo,
        ci_high=hi,
        seed=seed,
    )


@dataclass(frozen=True)
class GapValidation:
    """Empirical exceedance of a gap profile against its target delta."""

    per_step_exceedance: np.ndarray
    sup_exceedance: float
    delta: float
    tolerance: float
    trials: int
    seed: int

    @property
    def validated(self) -> bool:
        return self.sup_exceedance <= self.delta + self.tolerance


def validate_gap_profile(
    model: SystemModel,
    family: NoiseFamily,
    profile: GapProfile,
    trials: int,
    seed: int,
    x0: np.ndarray | None = None,
    inputs=None,
) -> GapValidation:
    """Check P(g_t <= r_{delta,t} for all t <= T) >= 1 - delta by simulation.

    The sup exceedance (any step above its radius) must stay below
    delta + 3 binomial sigma for the profile to validate.
    """
    horizon = profile.schedule.horizon
    if x0 is None:
        x0 = np.zeros(model.dim)
    gaps = gap_batch(model, family, x0, inputs, horizon, trials, seed)
    radii = profile.radii
    exceed = gaps[:, 1:] > radii[None, :]
    per_step = exceed.mean(axis=0)
    sup_frac = float(np.any(exceed, axis=1).mean())
    tol = 3.0 * math.sqrt(max(profile.delta * (1 - profile.delta), 1e-12) / trials)
    return GapValidation(
        per_step_exceedance=per_step,
        sup_exceedance=sup_frac,
        delta=profile.delta,
        tolerance=tol,
        trials=trials,
        seed=seed,
    )


def sup_abs_statistics(
    model: SystemModel,
    family: NoiseFamily,
    x0: np.ndarray,
    horizon: int,
    trials: int,
    seed: int,
) -> np.ndarray:
    """Per-trial running maxima of |X_t| over t <= T for interval benchmarks.

    For the centered-interval safe set {|x| <= R} the empirical failure
    probability at any radius R is the fraction of these maxima above R, so a
    whole R-sweep costs one batch of trajectories and is monotone in R by
    construction.
    """
    if model.dim != 1:
        raise ValueError("sup_abs_statistics expects a scalar model")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    states = np.broadcast_to(x0, (trials, 1)).copy()
    sup = np.abs(states[:, 0]).copy()
    for t in range(horizon):
        states = _advance(model, states, None, t) + noise_block(family, t, seed, trials)
        np.maximum(sup, np.abs(states[:, 0]), out=sup)
    return sup
