"""Probabilistic bounds on the gap between stochastic and deterministic trajectories.

Everything here is driven by two per-step schedules: Lipschitz gains L_t of the
deterministic update map and sub-Gaussian variance proxies sigma_t^2 of the
additive noise.  From these the module computes the radius r_{delta,t} such
that a stochastic trajectory stays within r_{delta,t} of its associated
deterministic trajectory simultaneously for all steps t <= T with probability
at least 1 - delta.  A conservative worst-case variant (noise treated as a
bounded disturbance) is provided for comparison; it is always at least as
large as the sharp radius.

Core quantities, with psi_t = prod_{k<=t} L_k^2:

    Psi_t   = psi_{t-1} * sum_{k<t} sigma_k^2 / psi_k       (variance accumulator)
    r_t     = sqrt(Psi_t * (eps1*n + eps2*log(T/delta)))    (sharp radius)
    r_t^wc  = (sum_{k<t} sigma_k * prod_{k<j<t} L_j)
              * sqrt(eps1*n + eps2*log(T/delta))            (worst-case radius)

Psi_t is evaluated through the recursion Psi_{t+1} = L_t^2 Psi_t + sigma_t^2,
which is algebraically identical to the product/sum form but never divides by
psi_k and stays finite when some L_k = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

__all__ = [
    "DegenerateScheduleError",
    "ScheduleSpec",
    "ConcentrationConstants",
    "GapProfile",
    "general_epsilon1",
    "general_epsilon2",
    "tail_factor",
    "psi",
    "capital_psi",
    "capital_psi_sequence",
    "gap_radius",
    "gap_profile",
    "noise_norm_bound",
]

SCALAR_EPSILON1 = 2.0 * math.log(2.0)
SCALAR_EPSILON2 = 2.0

GapMethod = Literal["sharp", "worst_case"]


class DegenerateScheduleError(ValueError):
    """A gain product hit zero, so psi_k^{-1} stops being defined."""


def _as_schedule_array(values: Sequence[float], name: str, horizon: int) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != horizon:
        raise ValueError(f"{name} must be a length-{horizon} sequence, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} entries must be finite")
    if np.any(arr < 0):
        raise ValueError(f"{name} entries must be nonnegative")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScheduleSpec:
    """Per-step Lipschitz gains and noise variance proxies over a finite horizon.

    ``lipschitz[t]`` bounds the expansion of the update map at step t and
    ``variance_proxy[t]`` is the sub-Gaussian proxy of the noise added at
    step t, for t = 0 .. horizon-1.
    """

    horizon: int
    lipschitz: np.ndarray
    variance_proxy: np.ndarray

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("horizon must be a positive integer")
        object.__setattr__(
            self, "lipschitz", _as_schedule_array(self.lipschitz, "lipschitz", self.horizon)
        )
        object.__setattr__(
            self,
            "variance_proxy",
            _as_schedule_array(self.variance_proxy, "variance_proxy", self.horizon),
        )

    @classmethod
    def constant(cls, horizon: int, lipschitz: float, variance_proxy: float) -> "ScheduleSpec":
        """Schedule with the same gain and variance proxy at every step."""
        return cls(
            horizon=horizon,
            lipschitz=np.full(horizon, float(lipschitz)),
            variance_proxy=np.full(horizon, float(variance_proxy)),
        )


def general_epsilon1(epsilon: float) -> float:
    """Dimension-term constant 2*log(1 + 2/eps) / (1 - eps)^2 for eps in (0,1)."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    return 2.0 * math.log(1.0 + 2.0 / epsilon) / (1.0 - epsilon) ** 2


def general_epsilon2(epsilon: float) -> float:
    """Tail-term constant 2 / (1 - eps)^2 for eps in (0,1)."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    return 2.0 / (1.0 - epsilon) ** 2


@dataclass(frozen=True)
class ConcentrationConstants:
    """Constants (eps1, eps2) entering the tail factor eps1*n + eps2*log(T/delta).

    ``for_dimension`` builds the canonical values: the general formulas in
    terms of a free parameter eps in (0,1), or the tighter scalar pair
    (2*log 2, 2) which applies when n = 1.  Both constants can be overridden
    explicitly; no attempt is made to guess improved constants for n >= 2.
    """

    epsilon: float
    epsilon1: float
    epsilon2: float
    dimension: int
    scalar_mode: bool

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.epsilon1 <= 0 or self.epsilon2 <= 0:
            raise ValueError("epsilon1 and epsilon2 must be positive")
        if self.dimension < 1:
            raise ValueError("dimension must be a positive integer")
        if self.scalar_mode and self.dimension != 1:
            raise ValueError("scalar_mode requires dimension 1")

    @classmethod
    def for_dimension(
        cls,
        dimension: int,
        epsilon: float = 1.0 / 16.0,
        scalar_mode: bool | None = None,
        epsilon1: float | None = None,
        epsilon2: float | None = None,
    ) -> "ConcentrationConstants":
        """Canonical constants for a state dimension.

        scalar_mode defaults to True exactly when dimension == 1; pass False
        to force the general formulas, or give epsilon1/epsilon2 directly to
        override both.
        """
        if scalar_mode is None:
            scalar_mode = dimension == 1
        if scalar_mode:
            e1 = SCALAR_EPSILON1 if epsilon1 is None else float(epsilon1)
            e2 = SCALAR_EPSILON2 if epsilon2 is None else float(epsilon2)
        else:
            e1 = general_epsilon1(epsilon) if epsilon1 is None else float(epsilon1)
            e2 = general_epsilon2(epsilon) if epsilon2 is None else float(epsilon2)
        return cls(
            epsilon=epsilon,
            epsilon1=e1,
            epsilon2=e2,
            dimension=dimension,
            scalar_mode=scalar_mode,
        )


def tail_factor(constants: ConcentrationConstants, delta: float, horizon: int) -> float:
    """eps1*n + eps2*log(T/delta), the squared scale of all radii here.

    Raises a domain error unless delta lies in (0, 1].
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if horizon < 1:
        raise ValueError("horizon must be a positive integer")
    return constants.epsilon1 * constants.dimension + constants.epsilon2 * math.log(
        horizon / delta
    )


def psi(schedule: ScheduleSpec, t: int) -> float:
    """Product of squared gains prod_{k=0..t} L_k^2.

    Refuses schedules with a zero gain up to step t: the product collapses to
    zero and its reciprocal (needed by the expanded accumulator form) is
    undefined.  Use the recursion in :func:`capital_psi`, which remains valid.
    """
    if not 0 <= t < schedule.horizon:
        raise ValueError(f"step index t must satisfy 0 <= t < {schedule.horizon}, got {t}")
    gains = schedule.lipschitz[: t + 1]
    if np.any(gains == 0.0):
        raise DegenerateScheduleError(
            "schedule has a zero Lipschitz gain; psi is degenerate, use the recursion form"
        )
    return float(np.prod(gains * gains))


def capital_psi(schedule: ScheduleSpec, t: int) -> float:
    """Variance accumulator Psi_t = psi_{t-1} * sum_{k<t} sigma_k^2 / psi_k.

    Computed by the recursion Psi_{t+1} = L_t^2 Psi_t + sigma_t^2 (both forms
    expand to sum_k sigma_k^2 * prod_{k<j<t} L_j^2), which never forms psi^-1
    and is defined even when some gains vanish.
    """
    if not 1 <= t <= schedule.horizon:
        raise ValueError(f"step index t must satisfy 1 <= t <= {schedule.horizon}, got {t}")
    acc = 0.0
    gains = schedule.lipschitz
    proxies = schedule.variance_proxy
    for k in range(t):
        acc = gains[k] * gains[k] * acc + proxies[k]
    return float(acc)


def capital_psi_sequence(schedule: ScheduleSpec) -> np.ndarray:
    """All accumulator values (Psi_1, ..., Psi_T) in one pass."""
    out = np.empty(schedule.horizon)
    acc = 0.0
    for k in range(schedule.horizon):
        acc = schedule.lipschitz[k] ** 2 * acc + schedule.variance_proxy[k]
        out[k] = acc
    return out


def _sharp_scale_sequence(schedule: ScheduleSpec) -> np.ndarray:
    # sqrt(Psi_t) through the recursion sqrt(Psi_{t+1}) = hypot(L_t sqrt(Psi_t), sigma_t),
    # which mirrors the worst-case recursion below operation by operation, so the
    # worst-case scale dominates this one even at float precision
    out = np.empty(schedule.horizon)
    acc = 0.0
    for k in range(schedule.horizon):
        acc = math.hypot(schedule.lipschitz[k] * acc, math.sqrt(schedule.variance_proxy[k]))
        out[k] = acc
    return out


def _worst_case_scale_sequence(schedule: ScheduleSpec) -> np.ndarray:
    # S_{t+1} = L_t S_t + sigma_t, the stable expansion of
    # sqrt(psi_{t-1}) * sum_k sigma_k * sqrt(1/psi_k).
    out = np.empty(schedule.horizon)
    acc = 0.0
    for k in range(schedule.horizon):
        acc = schedule.lipschitz[k] * acc + math.sqrt(schedule.variance_proxy[k])
        out[k] = acc
    return out


def gap_radius(
    schedule: ScheduleSpec,
    constants: ConcentrationConstants,
    delta: float,
    t: int,
) -> float:
    """Sharp gap radius r_{delta,t} = sqrt(Psi_t * (eps1*n + eps2*log(T/delta)))."""
    factor = tail_factor(constants, delta, schedule.horizon)
    return math.sqrt(capital_psi(schedule, t) * factor)


@dataclass(frozen=True)
class GapProfile:
    """Erosion radii r_{delta,t} for t = 1..T plus the inputs that produced them."""

    radii: np.ndarray
    delta: float
    constants: ConcentrationConstants
    schedule: ScheduleSpec
    method: GapMethod

    def __post_init__(self) -> None:
        radii = np.asarray(self.radii, dtype=float)
        if radii.shape != (self.schedule.horizon,):
            raise ValueError("radii length must equal the schedule horizon")
        if np.any(radii < 0) or not np.all(np.isfinite(radii)):
            raise ValueError("radii must be finite and nonnegative")
        radii.setflags(write=False)
        object.__setattr__(self, "radii", radii)

    @property
    def max_radius(self) -> float:
        """Largest erosion depth over the horizon (time-invariant erosion option)."""
        return float(np.max(self.radii))

    def radius_at(self, t: int) -> float:
        """Radius for step t, with r_{delta,0} = 0 (trajectories share the state at t=0)."""
        if not 0 <= t <= self.schedule.horizon:
            raise ValueError(f"step index t must satisfy 0 <= t <= {self.schedule.horizon}")
        return 0.0 if t == 0 else float(self.radii[t - 1])


def gap_profile(
    schedule: ScheduleSpec,
    constants: ConcentrationConstants,
    delta: float,
    method: GapMethod = "sharp",
) -> GapProfile:
    """Radii for every step of the horizon, sharp or worst-case.

    The worst-case variant bounds each noise term by its norm bound and sums
    the propagated magnitudes; it dominates the sharp profile pointwise, with
    equality only at t = 1 or when at most one variance proxy is active.
    """
    scale = math.sqrt(tail_factor(constants, delta, schedule.horizon))
    # both branches share the sqrt(tail factor) so that the worst-case radii
    # dominate the sharp ones exactly, ulps included, with equality at t = 1
    if method == "sharp":
        radii = _sharp_scale_sequence(schedule) * scale
    elif method == "worst_case":
        radii = _worst_case_scale_sequence(schedule) * scale
    else:
        raise ValueError(f"unknown method {method!r}")
    return GapProfile(
        radii=radii, delta=delta, constants=constants, schedule=schedule, method=method
    )


def noise_norm_bound(
    sigma2: float,
    constants: ConcentrationConstants,
    delta: float,
    horizon: int,
) -> float:
    """Norm bound b with P(||w_t|| <= b for all t <= T) >= 1 - delta.

    b = sqrt(sigma2 * (eps1*n + eps2*log(T/delta))); equals the sharp gap
    radius at t = 1 for the same proxy.
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    return math.sqrt(sigma2 * tail_factor(constants, delta, horizon))
