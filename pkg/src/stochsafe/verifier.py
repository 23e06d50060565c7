"""Deterministic safety verification on eroded safe sets.

Verifying a stochastic system on a safe set C with failure budget delta
reduces to verifying its associated deterministic system on C eroded by the
gap radii r_{delta,t}.  Two sound checkers implement the deterministic side:

* a reach tube that propagates an over-approximating ball (center advanced
  with a nominal input, radius grown by the per-step gain plus an input
  bloating term) and requires clearance >= r_{delta,t} + tube radius;
* a barrier checker that probes candidate time-varying reciprocal or
  exponential barrier functions on a grid with an explicit Lipschitz slack.

Failed checks yield "unverified" (these are one-sided methods, never proofs
of unsafety).  "falsified" is reserved for a concrete admissible
deterministic trajectory that leaves the safe set itself, which rules out
certifying the system through any erosion argument.

The closed-form threshold for the centered-interval benchmark inverts the
scalar-mode gap radius: delta_bar(R) = min(1, 2 T exp(-R^2 / (2 Psi_T))).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .dynamics import SystemModel, lipschitz_schedule, trajectory
from .gap_bound import GapProfile
from .geometry import (
    AxisBox,
    Ball,
    HalfspacePolytope,
    SafeSet,
    clearance_points,
    min_obstacle_clearance,
)

__all__ = [
    "EXIT_CODES",
    "VerificationProblem",
    "VerificationReport",
    "MalformedCandidateError",
    "ClassKFunction",
    "BarrierCandidate",
    "BarrierProbeSpec",
    "verify_reach_tube",
    "verify_barrier",
    "linear_interval_threshold",
    "interval_safe_set",
    "interval_quadratic_ebf",
]

Verdict = Literal["verified", "unverified", "falsified"]

EXIT_CODES: dict[str, int] = {"verified": 0, "unverified": 2, "falsified": 3}


def _initial_center_radius(initial_set) -> tuple[np.ndarray, float]:
    if isinstance(initial_set, Ball):
        return initial_set.center.copy(), float(initial_set.radius)
    if isinstance(initial_set, AxisBox):
        return initial_set.center, initial_set.circumradius
    point = np.asarray(initial_set, dtype=float).reshape(-1)
    return point, 0.0


def _initial_probe_points(initial_set, rng: np.random.Generator, samples: int) -> np.ndarray:
    center, radius = _initial_center_radius(initial_set)
    if isinstance(initial_set, AxisBox):
        pts = [center[None, :], initial_set.corners(), initial_set.sample(rng, samples)]
        return np.concatenate(pts, axis=0)
    if isinstance(initial_set, Ball):
        direction = rng.standard_normal((samples, center.shape[0]))
        norms = np.linalg.norm(direction, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        shell = center + radius * direction / norms
        return np.concatenate([center[None, :], shell], axis=0)
    return center[None, :]


@dataclass(frozen=True)
class VerificationProblem:
    """A stochastic safety query reduced to its deterministic ingredients."""

    model: SystemModel
    safe_set: SafeSet
    initial_set: Ball | AxisBox | np.ndarray
    horizon: int
    delta: float
    gap: GapProfile

    def __post_init__(self) -> None:
        if self.gap.schedule.horizon != self.horizon:
            raise ValueError("gap profile horizon does not match the problem horizon")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")
        probe = _initial_probe_points(self.initial_set, np.random.default_rng(0), 64)
        if np.any(clearance_points(probe, self.safe_set) < 0.0):
            raise ValueError("initial set is not contained in the safe set")


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of one verification run, with enough provenance to audit it."""

    verdict: Verdict
    method: str
    per_step_margin: np.ndarray
    witness: np.ndarray | None
    provenance: dict

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.verdict]

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "method": self.method,
            "exit_code": self.exit_code,
            "per_step_margin": np.asarray(self.per_step_margin).tolist(),
            "witness": None if self.witness is None else np.asarray(self.witness).tolist(),
            "provenance": self.provenance,
        }


def _erosion_radii(profile: GapProfile, horizon: int, erosion: str) -> np.ndarray:
    # radius indexed by t = 0..T with r_0 = 0 (trajectories share the state at t=0)
    if erosion == "max":
        radii = np.full(horizon + 1, profile.max_radius)
        radii[0] = profile.max_radius  # time-invariant option keeps one depth throughout
        return radii
    radii = np.concatenate([[0.0], profile.radii[:horizon]])
    return radii


def _falsification_witness(
    problem: VerificationProblem, probes: int, seed: int
) -> np.ndarray | None:
    """Concrete deterministic trajectories probed against the safe set itself."""
    model = problem.model
    rng = np.random.default_rng(seed)
    starts = [_initial_center_radius(problem.initial_set)[0]]
    if isinstance(problem.initial_set, AxisBox):
        starts.extend(problem.initial_set.corners())
    if probes > 0 and isinstance(problem.initial_set, AxisBox):
        starts.extend(problem.initial_set.sample(rng, probes))
    input_choices: list = [None]
    if model.input_dim > 0:
        input_choices = [np.broadcast_to(model.input_set.center, (problem.horizon, model.input_dim))]
        for v in model.input_set.vertices():
            input_choices.append(np.broadcast_to(v, (problem.horizon, model.input_dim)))
        for _ in range(probes):
            input_choices.append(model.input_set.sample(rng, problem.horizon))
    for x0 in starts:
        for inputs in input_choices:
            traj = trajectory(model, x0, inputs, problem.horizon)
            if np.any(clearance_points(traj, problem.safe_set) < 0.0):
                return traj
    return None


def verify_reach_tube(
    problem: VerificationProblem,
    nominal_input: np.ndarray | None = None,
    erosion: str = "per_step",
    falsify_probes: int = 8,
    seed: int = 0,
) -> VerificationReport:
    """Ball-tube over-approximation of all deterministic trajectories.

    The tube center follows the nominal input d* (default: center of D); the
    radius obeys rho_{t+1} = L_t rho_t + L_d rad(D), rho_0 = rad(X0).  The
    verdict is verified iff at every step the center clears every obstacle by
    at least r_{delta,t} + rho_t, which confines every admissible trajectory
    plus the stochastic fluctuation budget inside the safe set.
    """
    model = problem.model
    if model.input_dim > 0 and model.lipschitz_d is None:
        raise ValueError("reach-tube verification needs the input gain lipschitz_d")
    gains = lipschitz_schedule(model, problem.horizon)
    radii = _erosion_radii(problem.gap, problem.horizon, erosion)
    center, rho = _initial_center_radius(problem.initial_set)
    if model.input_dim > 0:
        d_star = model.input_set.center if nominal_input is None else np.asarray(nominal_input)
        bloat = float(model.lipschitz_d) * model.input_set.radius
    else:
        d_star = None
        bloat = 0.0
    margins = np.empty(problem.horizon + 1)
    margins[0] = min_obstacle_clearance(center, problem.safe_set) - radii[0] - rho
    for t in range(problem.horizon):
        center = np.asarray(model.update(center, d_star, t), dtype=float)
        rho = gains[t] * rho + bloat
        margins[t + 1] = min_obstacle_clearance(center, problem.safe_set) - radii[t + 1] - rho
    provenance = {
        "delta": problem.delta,
        "epsilon": problem.gap.constants.epsilon,
        "scalar_mode": problem.gap.constants.scalar_mode,
        "erosion": erosion,
        "erosion_radii": radii.tolist(),
        "lipschitz": gains.tolist(),
        "gap_method": problem.gap.method,
        "input_bloat_per_step": bloat,
    }
    if np.all(margins >= 0.0):
        return VerificationReport(
            verdict="verified",
            method="reach_tube",
            per_step_margin=margins,
            witness=None,
            provenance=provenance,
        )
    witness = _falsification_witness(problem, falsify_probes, seed)
    verdict: Verdict = "falsified" if witness is not None else "unverified"
    return VerificationReport(
        verdict=verdict,
        method="reach_tube",
        per_step_margin=margins,
        witness=witness,
        provenance=provenance,
    )


# ---------------------------------------------------------------------------
# Barrier certificates
# ---------------------------------------------------------------------------


class MalformedCandidateError(ValueError):
    """A barrier candidate fails its structural requirements."""


@dataclass(frozen=True)
class ClassKFunction:
    """Parametric extended class-K family: c*s (linear) or c*sign(s)|s|^p (power)."""

    kind: Literal["linear", "power"]
    coeff: float
    power: float = 1.0

    def __post_init__(self) -> None:
        if self.coeff <= 0:
            raise MalformedCandidateError("class-K coefficient must be positive")
        if self.kind == "power" and self.power <= 0:
            raise MalformedCandidateError("class-K power must be positive")
        if self.kind not in ("linear", "power"):
            raise MalformedCandidateError(f"unknown class-K kind {self.kind!r}")

    def __call__(self, s: np.ndarray | float) -> np.ndarray | float:
        s = np.asarray(s, dtype=float)
        if self.kind == "linear":
            out = self.coeff * s
        else:
            out = self.coeff * np.sign(s) * np.abs(s) ** self.power
        return out if out.ndim else float(out)

    def probe_monotone(self, span: float = 1.0, points: int = 64) -> None:
        """Sanity probe: strictly increasing through zero on [-span, span]."""
        s = np.linspace(-span, span, points)
        vals = np.asarray(self(s))
        if not np.all(np.diff(vals) > 0) or abs(float(self(0.0))) > 1e-12:
            raise MalformedCandidateError("class-K probe failed: not strictly increasing with f(0)=0")


@dataclass(frozen=True)
class BarrierCandidate:
    """User-supplied barrier data defining the certified set {h(x,t) >= 0}.

    Reciprocal candidates supply B with the class-K sandwich (alpha1, alpha2)
    and decrement bound alpha3; exponential candidates supply the decay
    parameter gamma in (0, 1].
    """

    kind: Literal["reciprocal", "exponential"]
    h: Callable[[np.ndarray, int], np.ndarray]
    name: str = "candidate"
    B: Callable[[np.ndarray, int], np.ndarray] | None = None
    alpha1: ClassKFunction | None = None
    alpha2: ClassKFunction | None = None
    alpha3: ClassKFunction | None = None
    gamma: float | None = None

    def __post_init__(self) -> None:
        if self.kind == "reciprocal":
            if self.B is None or None in (self.alpha1, self.alpha2, self.alpha3):
                raise MalformedCandidateError("reciprocal candidate needs B and alpha1..alpha3")
            for alpha in (self.alpha1, self.alpha2, self.alpha3):
                alpha.probe_monotone()
        elif self.kind == "exponential":
            if self.gamma is None or not 0.0 < self.gamma <= 1.0:
                raise MalformedCandidateError("exponential candidate needs gamma in (0, 1]")
        else:
            raise MalformedCandidateError(f"unknown barrier kind {self.kind!r}")


@dataclass(frozen=True)
class BarrierProbeSpec:
    """Grid and slack bookkeeping for barrier checking.

    spacing is the grid step in each dimension of the probe box;
    slack_lipschitz is a caller-supplied bound L_h on the Lipschitz constant
    of the checked residuals, so a pointwise margin of L_h * spacing on grid
    points extends the inequalities to the continuum between them.
    """

    box: AxisBox
    spacing: float = 1e-2
    input_samples: int = 8
    slack_lipschitz: float = 1.0
    seed: int = 0
    time_samples: int | None = None

    @property
    def margin(self) -> float:
        return self.slack_lipschitz * self.spacing

    def grid_points(self) -> np.ndarray:
        counts = np.maximum(
            2, np.ceil((self.box.upper - self.box.lower) / self.spacing).astype(int) + 1
        )
        axes = [
            np.linspace(self.box.lower[i], self.box.upper[i], counts[i])
            for i in range(self.box.dim)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def _probe_inputs(model: SystemModel, spec: BarrierProbeSpec) -> list:
    if model.input_dim == 0:
        return [None]
    rng = np.random.default_rng(spec.seed)
    probes = [v for v in model.input_set.vertices()]
    probes.extend(model.input_set.sample(rng, spec.input_samples))
    return probes


def verify_barrier(
    problem: VerificationProblem,
    candidate: BarrierCandidate,
    spec: BarrierProbeSpec,
    erosion: str = "per_step",
    falsify_probes: int = 8,
    seed: int = 0,
) -> VerificationReport:
    """Grid check of a barrier candidate on the eroded safe set.

    Three layers, each failing distinctly in the provenance record:
      1. inclusion: X0 subset of {h(.,t) >= 0} subset of the eroded safe set;
      2. the barrier inequalities on every grid point of the candidate set and
         every probed input, with the Lipschitz slack margin;
      3. on failure of 2, a falsification probe against the safe set itself.
    """
    model = problem.model
    radii = _erosion_radii(problem.gap, problem.horizon, erosion)
    grid = spec.grid_points()
    if grid.shape[1] != model.dim:
        raise ValueError("probe box dimension must match the state dimension")
    inputs = _probe_inputs(model, spec)
    x0_probe = _initial_probe_points(problem.initial_set, np.random.default_rng(spec.seed), 64)
    margin = spec.margin

    def h_at(points: np.ndarray, t: int) -> np.ndarray:
        return np.asarray(candidate.h(points, t), dtype=float).reshape(points.shape[0])

    times = range(problem.horizon + 1)
    worst_margin = math.inf
    worst_probe = None
    inclusion_failure = None
    condition_failure = None
    per_step_margin = np.full(problem.horizon + 1, math.inf)
    for t in times:
        hvals = h_at(grid, t)
        members = hvals >= 0.0
        # X0 must sit inside the candidate set at every time
        h0 = h_at(x0_probe, t)
        if np.any(h0 < 0.0):
            inclusion_failure = {"time": t, "kind": "initial_set_outside_candidate"}
            break
        if np.any(members):
            pts = grid[members]
            clear = clearance_points(pts, problem.safe_set)
            bad = clear < radii[t]
            if np.any(bad):
                idx = int(np.argmin(clear - radii[t]))
                inclusion_failure = {
                    "time": t,
                    "kind": "candidate_outside_eroded_set",
                    "point": pts[idx].tolist(),
                    "clearance": float(clear[idx]),
                    "required": float(radii[t]),
                }
                break
        if t == problem.horizon:
            break  # inequalities are one-step conditions; nothing to advance at T
        if candidate.kind == "exponential":
            active = members
            pts = grid[active]
            hcur = hvals[active]
            for d in inputs:
                nxt = _batch_update(model, pts, d, t)
                resid = h_at(nxt, t + 1) - (1.0 - candidate.gamma) * hcur
                step_worst = float(np.min(resid - margin)) if resid.size else math.inf
                per_step_margin[t] = min(per_step_margin[t], step_worst)
                if resid.size and step_worst < worst_margin:
                    worst_margin = step_worst
                    worst_probe = {
                        "time": t,
                        "point": pts[int(np.argmin(resid))].tolist(),
                        "residual": float(np.min(resid)),
                    }
                if step_worst < 0.0:
                    condition_failure = worst_probe | {"condition": "exponential_decrement"}
                    break
        else:
            # keep a boundary skin of width `margin` out of the reciprocal
            # sandwich: 1/alpha(h) diverges at h = 0 and the slack rule covers
            # the skipped layer
            active = hvals >= max(margin, 1e-12)
            pts = grid[active]
            hcur = hvals[active]
            if pts.size:
                Bcur = np.asarray(candidate.B(pts, t), dtype=float).reshape(-1)
                lo = 1.0 / np.asarray(candidate.alpha1(hcur))
                hi = 1.0 / np.asarray(candidate.alpha2(hcur))
                sandwich = np.minimum(Bcur - lo, hi - Bcur)
                step_worst = float(np.min(sandwich))
                per_step_margin[t] = min(per_step_margin[t], step_worst)
                if step_worst < 0.0:
                    idx = int(np.argmin(sandwich))
                    condition_failure = {
                        "time": t,
                        "point": pts[idx].tolist(),
                        "condition": "reciprocal_sandwich",
                        "residual": step_worst,
                    }
                    break
                for d in inputs:
                    nxt = _batch_update(model, pts, d, t)
                    Bnxt = np.asarray(candidate.B(nxt, t + 1), dtype=float).reshape(-1)
                    resid = np.asarray(candidate.alpha3(hcur)) - (Bnxt - Bcur)
                    step_worst = float(np.min(resid - margin))
                    per_step_margin[t] = min(per_step_margin[t], step_worst)
                    if step_worst < worst_margin:
                        worst_margin = step_worst
                        worst_probe = {
                            "time": t,
                            "point": pts[int(np.argmin(resid))].tolist(),
                            "residual": float(np.min(resid)),
                        }
                    if step_worst < 0.0:
                        condition_failure = worst_probe | {"condition": "reciprocal_decrement"}
                        break
        if condition_failure:
            break

    method = "barrier_ebf" if candidate.kind == "exponential" else "barrier_rbf"
    provenance = {
        "delta": problem.delta,
        "epsilon": problem.gap.constants.epsilon,
        "erosion": erosion,
        "erosion_radii": radii.tolist(),
        "candidate": candidate.name,
        "grid_spacing": spec.spacing,
        "slack_margin": margin,
        "inclusion_failure": inclusion_failure,
        "condition_failure": condition_failure,
    }
    if inclusion_failure is None and condition_failure is None:
        return VerificationReport(
            verdict="verified",
            method=method,
            per_step_margin=per_step_margin,
            witness=None,
            provenance=provenance,
        )
    witness = _falsification_witness(problem, falsify_probes, seed)
    verdict: Verdict = "falsified" if witness is not None else "unverified"
    return VerificationReport(
        verdict=verdict,
        method=method,
        per_step_margin=per_step_margin,
        witness=witness,
        provenance=provenance,
    )


def _batch_update(model: SystemModel, points: np.ndarray, d, t: int) -> np.ndarray:
    d_block = None
    if d is not None:
        d_block = np.broadcast_to(np.asarray(d, dtype=float), (points.shape[0], model.input_dim))
    try:
        out = np.asarray(model.update(points, d_block, t), dtype=float)
        if out.shape == points.shape:
            return out
    except Exception:
        pass
    out = np.empty_like(points)
    for i in range(points.shape[0]):
        out[i] = model.update(points[i], None if d is None else d, t)
    return out


# ---------------------------------------------------------------------------
# Closed-form interval benchmark
# ---------------------------------------------------------------------------


def linear_interval_threshold(L: float, sigma2: float, horizon: int, R: float) -> float:
    """Smallest non-certifiable failure probability for |x| <= R, clamped to 1.

    delta_bar = min(1, 2 T exp(-R^2 / (2 Psi_T))) with
    Psi_T = sigma2 (L^{2T} - 1) / (L^2 - 1) (limit sigma2 * T at L = 1).
    Consistent with the scalar-mode radius: delta_bar <= delta iff
    R >= r_{delta,T}.
    """
    if L <= 0:
        raise ValueError("L must be positive")
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    if R < 0:
        raise ValueError("R must be nonnegative")
    if horizon < 1:
        raise ValueError("horizon must be positive")
    if sigma2 == 0:
        return 0.0 if R >= 0 else 1.0
    if math.isclose(L, 1.0, rel_tol=0.0, abs_tol=1e-12):
        psi_T = sigma2 * horizon
    else:
        psi_T = sigma2 * math.expm1(2 * horizon * math.log(L)) / (L * L - 1.0)
    log_delta = math.log(2.0 * horizon) - R * R / (2.0 * psi_T)
    return min(1.0, math.exp(log_delta))


def interval_safe_set(R: float) -> SafeSet:
    """Scalar safe set {|x| <= R} as the complement of two halfspace obstacles."""
    if R <= 0:
        raise ValueError("interval radius must be positive")
    upper = HalfspacePolytope(normals=np.array([[-1.0]]), offsets=np.array([-R]))
    lower = HalfspacePolytope(normals=np.array([[1.0]]), offsets=np.array([-R]))
    return SafeSet(obstacles=(upper, lower), ambient_dim=1)


def interval_quadratic_ebf(radius: float, gamma: float) -> BarrierCandidate:
    """Time-invariant candidate h(x) = radius^2 - x^2 for interval benchmarks.

    For the scalar linear map with gain L the exponential condition holds
    identically with gamma = 1 - L^2: h(Lx) - (1-gamma) h(x) = radius^2 (1-L^2).
    """
    r2 = float(radius) ** 2

    def h(points: np.ndarray, t: int) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return r2 - pts[..., 0] ** 2

    return BarrierCandidate(
        kind="exponential", h=h, gamma=gamma, name=f"interval_quadratic(radius={radius:g})"
    )
