"""Deterministic update maps, built-in benchmark systems, Lipschitz estimation.

A :class:`SystemModel` wraps the noise-free update x_{t+1} = f(x_t, d_t, t)
together with its bounded input set D and whatever Lipschitz information is
known.  Built-in models (scalar/matrix linear maps and a planar unicycle with
a stabilizing feedback controller) are registered by name so experiment
configs can select them; custom models are added through the same registry,
never by parsing expressions at runtime.

Update callables of built-in models broadcast over leading axes: passing an
(N, n) array of states advances N trajectories at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog

from .geometry import AxisBox

__all__ = [
    "InputOutsideDomainError",
    "DegenerateRegionError",
    "InputBox",
    "InputVertices",
    "SystemModel",
    "UnicycleConfig",
    "step",
    "trajectory",
    "lipschitz_schedule",
    "estimate_lipschitz",
    "estimate_lipschitz_tube",
    "make_linear_scalar",
    "make_linear_matrix",
    "make_unicycle",
    "make_model",
    "register_model",
    "MODEL_REGISTRY",
]


class InputOutsideDomainError(ValueError):
    """An input point lies outside the declared input set D."""


class DegenerateRegionError(ValueError):
    """A sampling region has zero volume."""


@dataclass(frozen=True)
class InputBox:
    """Axis-aligned input set in R^m."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape or np.any(lower > upper):
            raise ValueError("input box requires lower <= upper componentwise")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def radius(self) -> float:
        """Circumradius around the center; what the reach tube absorbs per step."""
        return float(np.linalg.norm(0.5 * (self.upper - self.lower)))

    def contains(self, d: np.ndarray, tol: float = 1e-12) -> bool:
        d = np.asarray(d, dtype=float).reshape(-1)
        return d.shape == self.lower.shape and bool(
            np.all(d >= self.lower - tol) and np.all(d <= self.upper + tol)
        )

    def vertices(self) -> np.ndarray:
        import itertools

        return np.array(list(itertools.product(*zip(self.lower, self.upper))), dtype=float)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(size, self.dim))


@dataclass(frozen=True)
class InputVertices:
    """Input set given as the convex hull of finitely many points."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def center(self) -> np.ndarray:
        # centroid, not the exact Chebyshev center; the circumradius below is
        # taken around it so tube bloating stays sound
        return np.mean(self.points, axis=0)

    @property
    def radius(self) -> float:
        return float(np.max(np.linalg.norm(self.points - self.center, axis=1)))

    def contains(self, d: np.ndarray, tol: float = 1e-9) -> bool:
        d = np.asarray(d, dtype=float).reshape(-1)
        if d.shape[0] != self.dim:
            return False
        k = self.points.shape[0]
        res = linprog(
            c=np.zeros(k),
            A_eq=np.vstack([self.points.T, np.ones(k)]),
            b_eq=np.concatenate([d, [1.0]]),
            bounds=[(0, None)] * k,
        )
        return res.status == 0

    def vertices(self) -> np.ndarray:
        return self.points

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        weights = rng.dirichlet(np.ones(self.points.shape[0]), size=size)
        return weights @ self.points


InputSet = InputBox | InputVertices


@dataclass(frozen=True)
class SystemModel:
    """Deterministic system x_{t+1} = update(x, d, t) with input set D.

    lipschitz_x is either a single per-step gain or a full schedule; it bounds
    ||f(x,d,t) - f(y,d,t)|| / ||x - y|| uniformly over d in D.  lipschitz_d
    bounds the sensitivity to the input and is only needed by the reach-tube
    verifier.
    """

    name: str
    dim: int
    input_dim: int
    update: Callable[[np.ndarray, np.ndarray | None, int], np.ndarray]
    input_set: InputSet | None = None
    lipschitz_x: float | np.ndarray = 1.0
    lipschitz_d: float | None = None

    def __post_init__(self) -> None:
        if self.input_dim > 0 and self.input_set is None:
            raise ValueError("models with inputs must declare an input set")
        lx = self.lipschitz_x
        if np.ndim(lx) > 0:
            arr = np.asarray(lx, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, "lipschitz_x", arr)


def _check_input(model: SystemModel, d: np.ndarray | None) -> np.ndarray | None:
    if model.input_dim == 0:
        return None
    if d is None:
        raise InputOutsideDomainError(f"model {model.name!r} requires an input point")
    d = np.asarray(d, dtype=float).reshape(-1)
    if not model.input_set.contains(d):
        raise InputOutsideDomainError(f"input {d.tolist()} outside the input set")
    return d


def step(model: SystemModel, x: np.ndarray, d: np.ndarray | None, t: int) -> np.ndarray:
    """One application of the update map, with the input validated against D."""
    d = _check_input(model, d)
    x = np.asarray(x, dtype=float)
    return np.asarray(model.update(x, d, t), dtype=float)


def trajectory(
    model: SystemModel,
    x0: np.ndarray,
    inputs: Sequence[np.ndarray] | np.ndarray | None,
    horizon: int,
) -> np.ndarray:
    """States (x_0, ..., x_T) from iterating the update map.

    inputs must provide at least `horizon` input points (ignored for
    input-free models).  Deterministic: identical arguments produce bitwise
    identical output.
    """
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.shape[0] != model.dim:
        raise ValueError(f"x0 has dimension {x.shape[0]}, model expects {model.dim}")
    if model.input_dim > 0:
        if inputs is None or len(inputs) < horizon:
            raise ValueError(f"need at least {horizon} input points")
    out = np.empty((horizon + 1, model.dim))
    out[0] = x
    for t in range(horizon):
        d = None if model.input_dim == 0 else inputs[t]
        x = step(model, x, d, t)
        out[t + 1] = x
    return out


def lipschitz_schedule(model: SystemModel, horizon: int) -> np.ndarray:
    """Materialize the model's gain information as a per-step array."""
    lx = model.lipschitz_x
    if np.ndim(lx) == 0:
        return np.full(horizon, float(lx))
    arr = np.asarray(lx, dtype=float)
    if arr.shape[0] < horizon:
        raise ValueError(f"lipschitz schedule shorter than horizon {horizon}")
    return arr[:horizon].copy()


def _input_probes(model: SystemModel, rng: np.random.Generator, samples: int) -> list:
    if model.input_dim == 0:
        return [None]
    probes = [v for v in model.input_set.vertices()]
    probes.extend(model.input_set.sample(rng, samples))
    return probes


def estimate_lipschitz(
    model: SystemModel,
    region: AxisBox,
    t: int,
    samples: int,
    seed: int = 0,
    inflation: float = 1.05,
) -> float:
    """Statistical estimate of the step-t gain over a region.

    Samples point pairs in the region and inputs in D, takes the largest
    stretch ratio ||f(x,d,t) - f(y,d,t)|| / ||x - y||, and multiplies by the
    inflation factor.  The raw maximum under-approximates the true constant;
    inflation makes the estimate usable as a conservative stand-in.
    """
    if samples < 2:
        raise ValueError("need at least 2 samples")
    if region.dim != model.dim:
        raise ValueError("region dimension must match the state dimension")
    if not region.has_volume:
        raise DegenerateRegionError("sampling region has zero volume")
    rng = np.random.default_rng(seed)
    xs = region.sample(rng, samples)
    ys = region.sample(rng, samples)
    # nudge coincident pairs apart instead of dividing by zero
    same = np.linalg.norm(xs - ys, axis=1) == 0.0
    if np.any(same):
        ys[same] += 1e-9 * (region.upper - region.lower)
    best = 0.0
    for d in _input_probes(model, rng, max(4, samples // 16)):
        fx = np.asarray(model.update(xs, d, t), dtype=float)
        fy = np.asarray(model.update(ys, d, t), dtype=float)
        ratios = np.linalg.norm(fx - fy, axis=1) / np.linalg.norm(xs - ys, axis=1)
        best = max(best, float(np.max(ratios)))
    return best * inflation


def estimate_lipschitz_tube(
    model: SystemModel,
    x0: np.ndarray,
    horizon: int,
    halfwidth: np.ndarray | float,
    samples: int = 256,
    seed: int = 0,
    inflation: float = 1.0,
    nominal_input: np.ndarray | None = None,
) -> np.ndarray:
    """Per-step gain schedule estimated in boxes around the nominal trajectory.

    The step-t estimate samples pairs in a box of the given halfwidth centered
    on the nominal state at t, which is where a converging system actually
    lives; gains far from the operating tube are irrelevant to the funnel.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    hw = np.broadcast_to(np.asarray(halfwidth, dtype=float), (model.dim,))
    if nominal_input is None and model.input_dim > 0:
        nominal_input = model.input_set.center
    inputs = None if model.input_dim == 0 else [nominal_input] * horizon
    centers = trajectory(model, x0, inputs, horizon)
    out = np.empty(horizon)
    for t in range(horizon):
        region = AxisBox(lower=centers[t] - hw, upper=centers[t] + hw)
        out[t] = estimate_lipschitz(model, region, t, samples, seed=seed + t, inflation=inflation)
    return out


# ---------------------------------------------------------------------------
# Built-in models
# ---------------------------------------------------------------------------


def make_linear_scalar(gain: float = 0.99) -> SystemModel:
    """Scalar linear map x_{t+1} = gain * x_t (no input)."""

    def update(x, d, t):
        return gain * np.asarray(x, dtype=float)

    return SystemModel(
        name="linear_scalar",
        dim=1,
        input_dim=0,
        update=update,
        lipschitz_x=abs(gain),
        lipschitz_d=0.0,
    )


def make_linear_matrix(matrix: Sequence[Sequence[float]]) -> SystemModel:
    """Linear map x_{t+1} = A x_t with gain equal to the spectral norm of A."""
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    gain = float(np.linalg.norm(A, ord=2))

    def update(x, d, t):
        return np.asarray(x, dtype=float) @ A.T

    return SystemModel(
        name="linear_matrix",
        dim=A.shape[0],
        input_dim=0,
        update=update,
        lipschitz_x=gain,
        lipschitz_d=0.0,
    )


@dataclass(frozen=True)
class UnicycleConfig:
    """Planar unicycle discretization and controller parameters.

    State is (p_x, p_y, theta).  The feedback controller steers toward the
    origin using goal-frame components u = -(p . heading) (along-heading
    distance) and w = p_x sin(theta) - p_y cos(theta) (cross-heading error):

        v     = speed_gain * u / (range_soften + |p|)
        omega = steer_gain * w / (range_soften + |p|)

    The normalization bounds speed and steering sensitivity far from the goal,
    which keeps the closed-loop per-step gains close to 1 along the approach
    funnel.  The bounded disturbance d acts on the angular velocity.
    """

    eta: float = 0.01
    speed_gain: float = 2.0
    steer_gain: float = 4.0
    range_soften: float = 0.5
    d_bound: float = 0.1
    noise_base_sigma2: float = 0.01

    def __post_init__(self) -> None:
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.d_bound < 0:
            raise ValueError("d_bound must be nonnegative")
        if self.speed_gain < 0 or self.steer_gain < 0 or self.range_soften <= 0:
            raise ValueError("controller parameters must be nonnegative (soften positive)")

    @property
    def noise_sigma2(self) -> float:
        """Per-coordinate variance proxy of sqrt(eta)-scaled base noise."""
        return self.eta * self.noise_base_sigma2


def _wrap_angle(a: np.ndarray) -> np.ndarray:
    # wrap to (-pi, pi]
    return np.pi - np.mod(np.pi - a, 2.0 * np.pi)


def make_unicycle(config: UnicycleConfig | None = None) -> SystemModel:
    cfg = config or UnicycleConfig()

    def update(x, d, t):
        x = np.asarray(x, dtype=float)
        px, py, th = x[..., 0], x[..., 1], x[..., 2]
        c, s = np.cos(th), np.sin(th)
        e = np.hypot(px, py)
        soften = cfg.range_soften + e
        u = -(px * c + py * s)
        w = px * s - py * c
        v = cfg.speed_gain * u / soften
        omega = cfg.steer_gain * w / soften
        if d is None:
            dd = 0.0
        else:
            dd = np.asarray(d, dtype=float)
            dd = dd[..., 0] if dd.ndim else dd
        out = np.empty_like(x)
        out[..., 0] = px + cfg.eta * v * c
        out[..., 1] = py + cfg.eta * v * s
        out[..., 2] = _wrap_angle(th + cfg.eta * (omega + dd))
        return out

    return SystemModel(
        name="unicycle",
        dim=3,
        input_dim=1,
        update=update,
        input_set=InputBox(lower=np.array([-cfg.d_bound]), upper=np.array([cfg.d_bound])),
        # per-step gain in x is configuration dependent; estimate it over the
        # operating tube (estimate_lipschitz_tube) instead of trusting this
        lipschitz_x=1.0,
        lipschitz_d=cfg.eta,
    )


def _build_linear_scalar(params: dict) -> SystemModel:
    return make_linear_scalar(gain=float(params.get("gain", 0.99)))


def _build_linear_matrix(params: dict) -> SystemModel:
    if "matrix" not in params:
        raise ValueError("linear_matrix model requires a 'matrix' parameter")
    return make_linear_matrix(params["matrix"])


def _build_unicycle(params: dict) -> SystemModel:
    allowed = {
        "eta",
        "speed_gain",
        "steer_gain",
        "range_soften",
        "d_bound",
        "noise_base_sigma2",
    }
    unknown = set(params) - allowed
    if unknown:
        raise ValueError(f"unknown unicycle parameters: {sorted(unknown)}")
    return make_unicycle(UnicycleConfig(**{k: float(v) for k, v in params.items()}))


MODEL_REGISTRY: dict[str, Callable[[dict], SystemModel]] = {
    "linear_scalar": _build_linear_scalar,
    "linear_matrix": _build_linear_matrix,
    "unicycle": _build_unicycle,
}


def register_model(name: str, builder: Callable[[dict], SystemModel]) -> None:
    """Add a custom model builder to the registry used by experiment configs."""
    if name in MODEL_REGISTRY:
        raise ValueError(f"model {name!r} already registered")
    MODEL_REGISTRY[name] = builder


def make_model(name: str, params: dict | None = None) -> SystemModel:
    if name not in MODEL_REGISTRY:
        raise ValueError(f"unknown model {name!r}; registered: {sorted(MODEL_REGISTRY)}")
    return MODEL_REGISTRY[name](params or {})
