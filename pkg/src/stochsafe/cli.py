"""Config-driven command line frontend.

Subcommands map one-to-one onto the pipeline artifacts:

    bound      per-step sharp and worst-case gap radii as CSV
    verify     run the selected verifier, write a JSON report
    simulate   Monte Carlo gap statistics and failure estimate as CSV
    threshold  analytic vs simulated failure-probability sweep over R
    demo       both built-in case studies end to end

Experiments are described by a single JSON config; every output file embeds
the resolved config and a content hash of it, so results are reproducible
from the file alone.  All randomness is derived from the seed; reruns with
identical config and seed produce byte-identical outputs.

Exit codes: 0 success/verified, 1 usage or config error, 2 unverified,
3 falsified.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import SystemModel, estimate_lipschitz, estimate_lipschitz_tube, make_model
from .gap_bound import ConcentrationConstants, GapProfile, ScheduleSpec, gap_profile
from .geometry import AxisBox, Ball, SafeSet, min_obstacle_clearance, obstacle_from_dict
from .montecarlo import (
    NoiseFamily,
    estimate_failure,
    gap_batch,
    sup_abs_statistics,
    validate_gap_profile,
)
from .verifier import (
    BarrierCandidate,
    BarrierProbeSpec,
    VerificationProblem,
    interval_quadratic_ebf,
    linear_interval_threshold,
    verify_barrier,
    verify_reach_tube,
)

log = logging.getLogger("stochsafe")


class ConfigError(ValueError):
    """Invalid experiment configuration; message carries the offending path."""


# ---------------------------------------------------------------------------
# Config loading and validation
# ---------------------------------------------------------------------------

_TOP_KEYS = {
    "model",
    "noise",
    "safe_set",
    "initial_set",
    "horizon",
    "delta",
    "epsilon",
    "scalar_mode",
    "epsilon1",
    "epsilon2",
    "lipschitz",
    "method",
    "erosion",
    "barrier",
    "grid",
    "trials",
    "seed",
    "out_dir",
    "r_grid",
}


def _require(cfg: dict, key: str, path: str):
    if key not in cfg:
        raise ConfigError(f"{path}.{key}: required key missing")
    return cfg[key]


def _reject_unknown(cfg: dict, allowed: set[str], path: str) -> None:
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")


def _number(value, path: str, lo=None, hi=None, lo_open=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    v = float(value)
    if lo is not None and (v <= lo if lo_open else v < lo):
        cmp = ">" if lo_open else ">="
        raise ConfigError(f"{path}: must be {cmp} {lo}, got {value!r}")
    if hi is not None and v > hi:
        raise ConfigError(f"{path}: must be <= {hi}, got {value!r}")
    return int(v) if integer else v


def load_config(path: str | Path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    _reject_unknown(cfg, _TOP_KEYS, "config")
    model = _require(cfg, "model", "config")
    _reject_unknown(model, {"name", "params"}, "config.model")
    if not isinstance(_require(model, "name", "config.model"), str):
        raise ConfigError("config.model.name: expected a string")
    noise = _require(cfg, "noise", "config")
    _reject_unknown(noise, {"kind", "sigma2", "radius", "scale_value", "support_radius", "dimension", "scale"}, "config.noise")
    kind = _require(noise, "kind", "config.noise")
    if kind not in ("gaussian", "uniform_ball", "scaled_rademacher", "custom_bounded"):
        raise ConfigError(f"config.noise.kind: unknown noise kind {kind!r}")
    safe = _require(cfg, "safe_set", "config")
    _reject_unknown(safe, {"ambient_dim", "obstacles", "spatial_coords"}, "config.safe_set")
    _number(_require(safe, "ambient_dim", "config.safe_set"), "config.safe_set.ambient_dim", lo=1, integer=True)
    obstacles = safe.get("obstacles", [])
    if not isinstance(obstacles, list):
        raise ConfigError("config.safe_set.obstacles: expected a list")
    for i, rec in enumerate(obstacles):
        p = f"config.safe_set.obstacles[{i}]"
        if not isinstance(rec, dict) or "type" not in rec:
            raise ConfigError(f"{p}: expected a tagged record with a 'type' key")
        if rec["type"] not in ("ball", "axis_box", "halfspace_polytope"):
            raise ConfigError(f"{p}.type: unknown obstacle type {rec['type']!r}")
    init = _require(cfg, "initial_set", "config")
    _reject_unknown(init, {"type", "value", "center", "radius", "lower", "upper"}, "config.initial_set")
    if _require(init, "type", "config.initial_set") not in ("point", "box", "ball"):
        raise ConfigError("config.initial_set.type: expected point, box, or ball")
    _number(_require(cfg, "horizon", "config"), "config.horizon", lo=1, integer=True)
    _number(_require(cfg, "delta", "config"), "config.delta", lo=0.0, lo_open=True, hi=1.0)
    if "epsilon" in cfg:
        _number(cfg["epsilon"], "config.epsilon", lo=0.0, lo_open=True, hi=1.0)
    if "scalar_mode" in cfg and not isinstance(cfg["scalar_mode"], bool):
        raise ConfigError("config.scalar_mode: expected a boolean")
    for key in ("epsilon1", "epsilon2"):
        if key in cfg:
            _number(cfg[key], f"config.{key}", lo=0.0, lo_open=True)
    lip = cfg.get("lipschitz", {"source": "model"})
    _reject_unknown(
        lip,
        {"source", "value", "values", "halfwidth", "samples", "inflation", "lower", "upper", "step"},
        "config.lipschitz",
    )
    src = lip.get("source", "model")
    if src not in ("model", "constant", "schedule", "estimate", "estimate_tube"):
        raise ConfigError(f"config.lipschitz.source: unknown source {src!r}")
    method = cfg.get("method", "reach_tube")
    if method not in ("reach_tube", "barrier", "closed_form"):
        raise ConfigError(f"config.method: unknown method {method!r}")
    if cfg.get("erosion", "per_step") not in ("per_step", "max"):
        raise ConfigError("config.erosion: expected per_step or max")
    if "barrier" in cfg:
        _reject_unknown(cfg["barrier"], {"name", "params"}, "config.barrier")
    if "grid" in cfg:
        _reject_unknown(
            cfg["grid"],
            {"lower", "upper", "spacing", "input_samples", "slack_lipschitz"},
            "config.grid",
        )
    if "trials" in cfg:
        _number(cfg["trials"], "config.trials", lo=1, integer=True)
    if "seed" in cfg:
        _number(cfg["seed"], "config.seed", lo=0, integer=True)
    if "r_grid" in cfg:
        _reject_unknown(cfg["r_grid"], {"start", "stop", "count"}, "config.r_grid")
        _number(_require(cfg["r_grid"], "start", "config.r_grid"), "config.r_grid.start", lo=0.0)
        _number(_require(cfg["r_grid"], "stop", "config.r_grid"), "config.r_grid.stop", lo=0.0)
        _number(_require(cfg["r_grid"], "count", "config.r_grid"), "config.r_grid.count", lo=1, integer=True)
    if "out_dir" in cfg and not isinstance(cfg["out_dir"], str):
        raise ConfigError("config.out_dir: expected a string path")


# ---------------------------------------------------------------------------
# Config resolution
# ---------------------------------------------------------------------------


def _resolve_model(cfg: dict) -> SystemModel:
    try:
        return make_model(cfg["model"]["name"], cfg["model"].get("params", {}))
    except ValueError as exc:
        raise ConfigError(f"config.model: {exc}") from exc


def _resolve_noise(cfg: dict, model: SystemModel) -> NoiseFamily:
    noise = cfg["noise"]
    kind = noise["kind"]
    dimension = int(noise.get("dimension", model.dim))
    if dimension != model.dim:
        raise ConfigError(
            f"config.noise.dimension: {dimension} does not match model dimension {model.dim}"
        )
    scale = noise.get("scale", 1.0)
    if isinstance(scale, list):
        scale = np.asarray(scale, dtype=float)
    if kind == "gaussian":
        return NoiseFamily.gaussian(float(noise.get("sigma2", 0.0)), dimension, scale)
    if kind == "uniform_ball":
        return NoiseFamily.uniform_ball(float(noise.get("radius", 0.0)), dimension, scale)
    if kind == "scaled_rademacher":
        return NoiseFamily.scaled_rademacher(float(noise.get("scale_value", 0.0)), dimension, scale)
    return NoiseFamily.custom_bounded(float(noise.get("support_radius", 0.0)), dimension, scale=scale)


def _resolve_safe_set(cfg: dict) -> SafeSet:
    safe = cfg["safe_set"]
    try:
        obstacles = tuple(obstacle_from_dict(rec) for rec in safe.get("obstacles", []))
        coords = safe.get("spatial_coords")
        return SafeSet(
            obstacles=obstacles,
            ambient_dim=int(safe["ambient_dim"]),
            spatial_coords=None if coords is None else tuple(coords),
        )
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"config.safe_set: {exc}") from exc


def _resolve_initial_set(cfg: dict):
    init = cfg["initial_set"]
    kind = init["type"]
    try:
        if kind == "point":
            return np.asarray(init["value"], dtype=float)
        if kind == "box":
            return AxisBox(
                lower=np.asarray(init["lower"], dtype=float),
                upper=np.asarray(init["upper"], dtype=float),
            )
        return Ball(center=np.asarray(init["center"], dtype=float), radius=float(init["radius"]))
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"config.initial_set: {exc}") from exc


def _initial_center(initial_set) -> np.ndarray:
    if isinstance(initial_set, (AxisBox, Ball)):
        return np.asarray(initial_set.center, dtype=float)
    return np.asarray(initial_set, dtype=float)


def _resolve_lipschitz(cfg: dict, model: SystemModel, horizon: int) -> np.ndarray:
    lip = cfg.get("lipschitz", {"source": "model"})
    src = lip.get("source", "model")
    if src == "model":
        if np.ndim(model.lipschitz_x) == 0:
            return np.full(horizon, float(model.lipschitz_x))
        return np.asarray(model.lipschitz_x, dtype=float)[:horizon]
    if src == "constant":
        return np.full(horizon, _number(_require(lip, "value", "config.lipschitz"), "config.lipschitz.value", lo=0.0))
    if src == "schedule":
        values = np.asarray(_require(lip, "values", "config.lipschitz"), dtype=float)
        if values.shape[0] < horizon:
            raise ConfigError("config.lipschitz.values: shorter than the horizon")
        return values[:horizon]
    seed = int(cfg.get("seed", 0))
    samples = int(lip.get("samples", 256))
    inflation = float(lip.get("inflation", 1.05 if src == "estimate" else 1.0))
    if src == "estimate_tube":
        halfwidth = lip.get("halfwidth", 0.4)
        center = _initial_center(_resolve_initial_set(cfg))
        return estimate_lipschitz_tube(
            model, center, horizon, halfwidth, samples=samples, seed=seed, inflation=inflation
        )
    region = AxisBox(
        lower=np.asarray(_require(lip, "lower", "config.lipschitz"), dtype=float),
        upper=np.asarray(_require(lip, "upper", "config.lipschitz"), dtype=float),
    )
    est = np.empty(horizon)
    for t in range(horizon):
        est[t] = estimate_lipschitz(model, region, t, samples, seed=seed + t, inflation=inflation)
    return est


def _resolve_constants(cfg: dict, model: SystemModel) -> ConcentrationConstants:
    return ConcentrationConstants.for_dimension(
        model.dim,
        epsilon=float(cfg.get("epsilon", 1.0 / 16.0)),
        scalar_mode=cfg.get("scalar_mode"),
        epsilon1=cfg.get("epsilon1"),
        epsilon2=cfg.get("epsilon2"),
    )


def _resolved_pipeline(cfg: dict):
    model = _resolve_model(cfg)
    horizon = int(cfg["horizon"])
    lipschitz = _resolve_lipschitz(cfg, model, horizon)
    noise = _resolve_noise(cfg, model)
    schedule = ScheduleSpec(
        horizon=horizon,
        lipschitz=lipschitz,
        variance_proxy=np.array([noise.variance_proxy(t) for t in range(horizon)]),
    )
    constants = _resolve_constants(cfg, model)
    delta = float(cfg["delta"])
    profile = gap_profile(schedule, constants, delta, "sharp")
    worst = gap_profile(schedule, constants, delta, "worst_case")
    # the verifiers read gains off the model, keep it consistent with the schedule
    model = SystemModel(
        name=model.name,
        dim=model.dim,
        input_dim=model.input_dim,
        update=model.update,
        input_set=model.input_set,
        lipschitz_x=lipschitz,
        lipschitz_d=model.lipschitz_d,
    )
    return model, noise, schedule, constants, profile, worst


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def config_content_hash(cfg: dict) -> str:
    """Git-style blob hash of the canonical config serialization."""
    data = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _provenance(cfg: dict) -> dict:
    return {
        "tool": f"stochsafe {__version__}",
        "config_hash": config_content_hash(cfg),
        "config": cfg,
    }


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def write_csv(path: Path, header: list[str], rows, cfg: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(
            "# provenance: "
            + json.dumps(_provenance(cfg), sort_keys=True, separators=(",", ":"))
            + "\n"
        )
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    log.info("wrote %s", path)


def write_report(path: Path, report, cfg: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    payload["provenance"].update(_provenance(cfg))
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    log.info("wrote %s", path)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_bound(cfg: dict, out_dir: Path) -> int:
    _, _, _, _, profile, worst = _resolved_pipeline(cfg)
    rows = [
        (t + 1, profile.radii[t], worst.radii[t])
        for t in range(profile.schedule.horizon)
    ]
    write_csv(out_dir / "bound.csv", ["t", "r_sharp", "r_worst"], rows, cfg)
    return 0


def _build_barrier(cfg: dict, profile: GapProfile, safe_set: SafeSet, lipschitz) -> BarrierCandidate:
    barrier = cfg.get("barrier")
    if barrier is None or barrier.get("name") == "interval_quadratic":
        params = {} if barrier is None else barrier.get("params", {})
        origin = np.zeros(safe_set.ambient_dim)
        interval_radius = min_obstacle_clearance(origin, safe_set)
        radius = float(params.get("radius", interval_radius - profile.max_radius))
        gain = float(np.max(lipschitz))
        gamma = float(params.get("gamma", 1.0 - gain**2))
        return interval_quadratic_ebf(radius, gamma)
    raise ConfigError(f"config.barrier.name: unknown candidate {barrier.get('name')!r}")


def cmd_verify(cfg: dict, out_dir: Path) -> int:
    model, noise, schedule, constants, profile, _ = _resolved_pipeline(cfg)
    safe_set = _resolve_safe_set(cfg)
    initial_set = _resolve_initial_set(cfg)
    method = cfg.get("method", "reach_tube")
    erosion = cfg.get("erosion", "per_step")
    seed = int(cfg.get("seed", 0))
    try:
        problem = VerificationProblem(
            model=model,
            safe_set=safe_set,
            initial_set=initial_set,
            horizon=schedule.horizon,
            delta=profile.delta,
            gap=profile,
        )
    except ValueError as exc:
        raise ConfigError(f"verification problem: {exc}") from exc
    if method == "closed_form":
        report = _closed_form_report(cfg, model, safe_set, initial_set, schedule, profile)
    elif method == "barrier":
        candidate = _build_barrier(cfg, profile, safe_set, schedule.lipschitz)
        grid_cfg = cfg.get("grid", {})
        origin = np.zeros(safe_set.ambient_dim)
        reach = min_obstacle_clearance(origin, safe_set)
        reach = 1.0 if not math.isfinite(reach) else reach
        lower = np.asarray(grid_cfg.get("lower", -reach * np.ones(model.dim)), dtype=float)
        upper = np.asarray(grid_cfg.get("upper", reach * np.ones(model.dim)), dtype=float)
        spec = BarrierProbeSpec(
            box=AxisBox(lower=lower, upper=upper),
            spacing=float(grid_cfg.get("spacing", 1e-2)),
            input_samples=int(grid_cfg.get("input_samples", 8)),
            slack_lipschitz=float(grid_cfg.get("slack_lipschitz", 1.0)),
            seed=seed,
        )
        report = verify_barrier(problem, candidate, spec, erosion=erosion, seed=seed)
    else:
        report = verify_reach_tube(problem, erosion=erosion, seed=seed)
    write_report(out_dir / "verify_report.json", report, cfg)
    return report.exit_code


def _closed_form_report(cfg, model, safe_set, initial_set, schedule, profile):
    from .verifier import VerificationReport

    if model.dim != 1:
        raise ConfigError("config.method: closed_form applies to scalar interval benchmarks")
    center = _initial_center(initial_set)
    R = min_obstacle_clearance(center, safe_set)
    L = float(np.max(schedule.lipschitz))
    sigma2 = float(np.max(schedule.variance_proxy))
    delta_bar = linear_interval_threshold(L, sigma2, schedule.horizon, R)
    verified = delta_bar <= profile.delta
    margin = R - profile.max_radius
    return VerificationReport(
        verdict="verified" if verified else "unverified",
        method="closed_form_interval",
        per_step_margin=np.array([margin]),
        witness=None,
        provenance={
            "delta": profile.delta,
            "delta_bar": delta_bar,
            "interval_radius": R,
            "lipschitz": L,
            "sigma2": sigma2,
        },
    )


def cmd_simulate(cfg: dict, out_dir: Path) -> int:
    model, noise, schedule, constants, profile, worst = _resolved_pipeline(cfg)
    safe_set = _resolve_safe_set(cfg)
    initial_set = _resolve_initial_set(cfg)
    trials = int(cfg.get("trials", 100_000))
    seed = int(cfg.get("seed", 0))
    horizon = schedule.horizon
    center = _initial_center(initial_set)
    gaps = gap_batch(model, noise, center, None, horizon, trials, seed)
    q50, q99, q999 = np.quantile(gaps[:, 1:], [0.5, 0.99, 0.999], axis=0)
    exceed = (gaps[:, 1:] > profile.radii[None, :]).mean(axis=0)
    rows = [
        (t + 1, profile.radii[t], worst.radii[t], q50[t], q99[t], q999[t], exceed[t])
        for t in range(horizon)
    ]
    write_csv(
        out_dir / "gap_stats.csv",
        ["t", "r_sharp", "r_worst", "q50", "q99", "q999", "exceed_frac"],
        rows,
        cfg,
    )

    if isinstance(initial_set, AxisBox):
        x0_sampler = lambda rng, n: rng.uniform(initial_set.lower, initial_set.upper, (n, model.dim))
    elif isinstance(initial_set, Ball):
        def x0_sampler(rng, n, _b=initial_set):
            direction = rng.standard_normal((n, model.dim))
            direction /= np.maximum(np.linalg.norm(direction, axis=1, keepdims=True), 1e-300)
            radii = _b.radius * rng.random((n, 1)) ** (1.0 / model.dim)
            return _b.center + radii * direction
    else:
        x0_sampler = center
    result = estimate_failure(model, noise, safe_set, x0_sampler, None, horizon, trials, seed)
    sup_exceed = float(np.any(gaps[:, 1:] > profile.radii[None, :], axis=1).mean())
    write_csv(
        out_dir / "failure_summary.csv",
        [
            "trials",
            "failures",
            "empirical_delta",
            "ci_low",
            "ci_high",
            "ci_method",
            "gap_sup_exceed_frac",
            "delta_target",
            "seed",
        ],
        [
            (
                result.trials,
                result.failures,
                result.empirical_delta,
                result.ci_low,
                result.ci_high,
                result.ci_method,
                sup_exceed,
                profile.delta,
                seed,
            )
        ],
        cfg,
    )
    return 0


def cmd_threshold(cfg: dict, out_dir: Path) -> int:
    model, noise, schedule, constants, profile, _ = _resolved_pipeline(cfg)
    if "r_grid" not in cfg:
        raise ConfigError("config.r_grid: required for the threshold sweep")
    if model.dim != 1:
        raise ConfigError("config.model: threshold sweep applies to scalar interval benchmarks")
    grid_cfg = cfg["r_grid"]
    grid = np.linspace(float(grid_cfg["start"]), float(grid_cfg["stop"]), int(grid_cfg["count"]))
    L = float(np.max(schedule.lipschitz))
    sigma2 = float(np.max(schedule.variance_proxy))
    horizon = schedule.horizon
    trials = int(cfg.get("trials", 100_000))
    seed = int(cfg.get("seed", 0))
    center = _initial_center(_resolve_initial_set(cfg))
    sup = sup_abs_statistics(model, noise, center, horizon, trials, seed)
    rows = []
    for R in grid:
        analytic = linear_interval_threshold(L, sigma2, horizon, float(R))
        simulated = float(np.mean(sup > R))
        rows.append((float(R), analytic, simulated))
    write_csv(out_dir / "threshold.csv", ["R", "delta_analytic", "delta_simulated"], rows, cfg)
    return 0


# ---------------------------------------------------------------------------
# Demo: both built-in case studies
# ---------------------------------------------------------------------------


def linear_demo_config(trials: int = 100_000, seed: int = 0, out_dir: str = "out/linear") -> dict:
    """Scalar linear benchmark: gain 0.99, Gaussian noise 1e-3, |x| <= R safe set."""
    R = 1.2
    return {
        "model": {"name": "linear_scalar", "params": {"gain": 0.99}},
        "noise": {"kind": "gaussian", "sigma2": 1e-3},
        "safe_set": {
            "ambient_dim": 1,
            "obstacles": [
                {"type": "halfspace_polytope", "normals": [[-1.0]], "offsets": [-R]},
                {"type": "halfspace_polytope", "normals": [[1.0]], "offsets": [-R]},
            ],
        },
        "initial_set": {"type": "point", "value": [0.0]},
        "horizon": 100,
        "delta": 1e-4,
        "lipschitz": {"source": "model"},
        "method": "reach_tube",
        "trials": trials,
        "seed": seed,
        "out_dir": out_dir,
        "r_grid": {"start": 0.0, "stop": 1.3, "count": 27},
    }


def unicycle_demo_config(trials: int = 20_000, seed: int = 0, out_dir: str = "out/unicycle") -> dict:
    """Unicycle with three disc obstacles, matching the built-in controller."""
    return {
        "model": {"name": "unicycle", "params": {}},
        "noise": {"kind": "gaussian", "sigma2": 0.01, "scale": 0.1},
        "safe_set": {
            "ambient_dim": 3,
            "spatial_coords": [0, 1],
            "obstacles": [
                {"type": "ball", "center": [1.5, 3.5], "radius": 0.9},
                {"type": "ball", "center": [-0.5, 2.0], "radius": 0.72},
                {"type": "ball", "center": [6.2, 0.7], "radius": 0.75},
            ],
        },
        "initial_set": {
            "type": "box",
            "lower": [4.9, 4.9, -1.1471975511965976],
            "upper": [5.1, 5.1, -0.9471975511965976],
        },
        "horizon": 100,
        "delta": 1e-4,
        "epsilon": 0.0625,
        "lipschitz": {"source": "estimate_tube", "halfwidth": 0.4, "samples": 256, "inflation": 1.0},
        "method": "reach_tube",
        "trials": trials,
        "seed": seed,
        "out_dir": out_dir,
    }


def _write_demo_trajectories(cfg: dict, out_dir: Path, count: int = 60) -> None:
    model, noise, schedule, _, profile, _ = _resolved_pipeline(cfg)
    initial_set = _resolve_initial_set(cfg)
    horizon = schedule.horizon
    seed = int(cfg.get("seed", 0))
    rng = np.random.default_rng(seed)
    if isinstance(initial_set, AxisBox):
        starts = initial_set.sample(rng, count)
    else:
        starts = np.broadcast_to(_initial_center(initial_set), (count, model.dim))
    det_rows = []
    sto_rows = []
    from .montecarlo import noise_block

    for i in range(count):
        if model.input_dim > 0:
            inputs = model.input_set.sample(rng, horizon)
        else:
            inputs = None
        det = starts[i].copy()
        sto = starts[i].copy()
        det_rows.append((i, 0, *det))
        sto_rows.append((i, 0, *sto))
        for t in range(horizon):
            d = None if inputs is None else inputs[t]
            det = np.asarray(model.update(det, d, t), dtype=float)
            w = noise_block(noise, t, seed + 1000 + i, 1)[0]
            sto = np.asarray(model.update(sto, d, t), dtype=float) + w
            det_rows.append((i, t + 1, *det))
            sto_rows.append((i, t + 1, *sto))
    cols = ["trial", "t"] + [f"x{j}" for j in range(model.dim)]
    write_csv(out_dir / "trajectories_det.csv", cols, det_rows, cfg)
    write_csv(out_dir / "trajectories_stoch.csv", cols, sto_rows, cfg)

    safe_set = _resolve_safe_set(cfg)
    r_m = profile.max_radius
    obs_rows = []
    for rec in cfg["safe_set"].get("obstacles", []):
        if rec["type"] == "ball":
            obs_rows.append(("ball", rec["center"][0], rec["center"][1], rec["radius"], None, None, None, None, r_m))
        elif rec["type"] == "axis_box":
            obs_rows.append(
                ("axis_box", None, None, None, rec["lower"][0], rec["lower"][1], rec["upper"][0], rec["upper"][1], r_m)
            )
    write_csv(
        out_dir / "obstacles.csv",
        ["type", "cx", "cy", "radius", "lx", "ly", "ux", "uy", "erosion"],
        obs_rows,
        cfg,
    )


def cmd_demo(out_dir: Path, trials: int | None, seed: int) -> int:
    lin_trials = trials or 100_000
    uni_trials = trials or 20_000
    lin = linear_demo_config(trials=lin_trials, seed=seed, out_dir=str(out_dir / "linear"))
    uni = unicycle_demo_config(trials=uni_trials, seed=seed, out_dir=str(out_dir / "unicycle"))
    status = 0
    lin_dir, uni_dir = out_dir / "linear", out_dir / "unicycle"
    for cfg, d in ((lin, lin_dir), (uni, uni_dir)):
        d.mkdir(parents=True, exist_ok=True)
        (d / "config.json").write_text(json.dumps(cfg, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        cmd_bound(cfg, d)
        status = max(status, cmd_verify(cfg, d))
        cmd_simulate(cfg, d)
    cmd_threshold(lin, lin_dir)
    _write_demo_trajectories(uni, uni_dir)
    log.info("demo complete; verdict exit status %d", status)
    return status


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _setup_logging() -> None:
    level = os.environ.get("EV_LOG_LEVEL", "warn").lower()
    mapping = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=mapping.get(level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochsafe",
        description="Safety verification of discrete-time stochastic systems via set erosion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config in (
        ("bound", True),
        ("verify", True),
        ("simulate", True),
        ("threshold", True),
        ("demo", False),
    ):
        p = sub.add_parser(name)
        if needs_config:
            p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--out", default=None, help="output directory (overrides config out_dir)")
        p.add_argument("--seed", type=int, default=None, help="RNG seed (overrides config)")
        p.add_argument("--trials", type=int, default=None, help="trial count (overrides config)")
        p.add_argument("--threads", type=int, default=None, help="cap worker threads")
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
        os.environ.setdefault("OPENBLAS_NUM_THREADS", str(args.threads))
    try:
        if args.command == "demo":
            out = Path(args.out or "demo_out")
            return cmd_demo(out, args.trials, args.seed or 0)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.trials is not None:
            if args.trials < 1:
                raise ConfigError("--trials: must be at least 1")
            cfg["trials"] = args.trials
        out = Path(args.out or cfg.get("out_dir", "out"))
        if args.command == "bound":
            return cmd_bound(cfg, out)
        if args.command == "verify":
            return cmd_verify(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "threshold":
            return cmd_threshold(cfg, out)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        log.error("%s", exc)
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
