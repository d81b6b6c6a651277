"""Config-driven experiment suites over the metric/quotient/planning stack.

Each suite builds one base environment, runs its pipeline, and writes to
`<output_dir>/<suite>/`:

    report.json    suite rows (stable field names), pass/fail flags, config
                   echo - deterministic bytes for a given config and seed
    metadata.json  wall-clock timings and a timestamp; the only file allowed
                   to differ between identical reruns
    metric.csv / residuals.csv and suite-specific artifacts (quotient dumps,
    spectra, value tables, the adversarial worst instance)

Suites: metric_baseline, transfer_test, composition, backward_stability,
info_theory, spectral, scaling, compression_sweep, perturb_sweep,
adversarial. All metric-bearing suites share a common core (metric solve,
summary and spectral rows, contraction estimates), which is what makes
their array_mean/array_std rows byte-identical on a shared base MDP.
"""
from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:  # python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - environment dependent
    import tomli as tomllib

from . import diagnostics, logic, metric, planning, quotient
from .evolution import DeResult, maximize
from .mdp import (
    FiniteMdp,
    GridWorldSpec,
    make_chain_example,
    make_grid_world,
    make_random_mdp,
    mdp_to_dict,
    save_mdp,
)

SUITE_NAMES = (
    "metric_baseline",
    "transfer_test",
    "composition",
    "backward_stability",
    "info_theory",
    "spectral",
    "scaling",
    "compression_sweep",
    "perturb_sweep",
    "adversarial",
)

ENVIRONMENTS = ("grid", "chain", "random")

# Default output directory resolution: explicit config value, then this
# environment variable, then ./out.
OUTPUT_DIR_ENV = "MDPMETRIC_OUTPUT_DIR"

# Numerical slack mirrored from the invariants the flags certify.
CONTRACTION_SLACK = 1e-6
PAIR_SLACK = 1e-9
LIPSCHITZ_SLACK = 1e-7
SPECTRAL_REL_TOL = 1e-8


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration; names the field."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat, TOML-serializable description of one suite run.

    Grid fields apply when environment == "grid", the n_states/n_actions
    pair when environment == "random". goal == -1 means the default corner
    cell; adversarial_population == 0 means the evolution default
    min(15 * dim, 300); output_dir == "" defers to $MDPMETRIC_OUTPUT_DIR
    and then ./out.
    """

    suite: str
    environment: str = "grid"
    gamma: float = 0.95
    # grid environment
    side: int = 5
    slip: float = 0.07
    goal: int = -1
    goal_reward: float = 1.0
    perturbed_slip: float = 0.10
    perturb_slips: tuple = (0.05, 0.10, 0.15)
    # random environment
    n_states: int = 4
    n_actions: int = 2
    seed: int = 0
    # pipeline
    epsilons: tuple = (0.1, 0.5, 1.0, 2.0)
    value_loss_eps_scale: float = 0.1
    metric_tolerance: float = 1e-9
    vi_tolerance: float = 1e-9
    drift_tolerance: float = 1e-9
    contraction_trials: int = 10
    # adversarial search
    adversarial_generations: int = 1000
    adversarial_bound: float = 10.0
    adversarial_population: int = 0
    adversarial_tol: float = 0.01
    search_metric_tolerance: float = 1e-6
    search_vi_tolerance: float = 1e-8
    output_dir: str = ""

    def __post_init__(self):
        object.__setattr__(self, "perturb_slips", tuple(self.perturb_slips))
        object.__setattr__(self, "epsilons", tuple(self.epsilons))
        if self.suite not in SUITE_NAMES:
            raise ConfigError(
                f"suite: unknown suite {self.suite!r}; expected one of {', '.join(SUITE_NAMES)}"
            )
        if self.environment not in ENVIRONMENTS:
            raise ConfigError(
                f"environment: unknown environment {self.environment!r}; "
                f"expected one of {', '.join(ENVIRONMENTS)}"
            )
        if not (0.0 < self.gamma < 1.0):
            raise ConfigError(f"gamma: must lie strictly in (0, 1), got {self.gamma}")
        if self.side < 2:
            raise ConfigError(f"side: grid side must be >= 2, got {self.side}")
        for key, value in (("slip", self.slip), ("perturbed_slip", self.perturbed_slip)):
            if not (0.0 <= value <= 1.0):
                raise ConfigError(f"{key}: must lie in [0, 1], got {value}")
        for value in self.perturb_slips:
            if not (0.0 <= value <= 1.0):
                raise ConfigError(f"perturb_slips: entry {value} outside [0, 1]")
        if self.goal != -1 and not (0 <= self.goal < self.side * self.side):
            raise ConfigError(f"goal: cell {self.goal} outside the {self.side}x{self.side} grid")
        if self.n_states < 2:
            raise ConfigError(f"n_states: must be >= 2, got {self.n_states}")
        if self.n_actions < 1:
            raise ConfigError(f"n_actions: must be >= 1, got {self.n_actions}")
        if not self.epsilons:
            raise ConfigError("epsilons: list must be non-empty")
        if any(e < 0 for e in self.epsilons):
            raise ConfigError("epsilons: thresholds must be >= 0")
        if list(self.epsilons) != sorted(self.epsilons):
            raise ConfigError(f"epsilons: list must be sorted ascending, got {self.epsilons}")
        for key in (
            "metric_tolerance",
            "vi_tolerance",
            "drift_tolerance",
            "search_metric_tolerance",
            "search_vi_tolerance",
        ):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key}: must be positive, got {getattr(self, key)}")
        if self.value_loss_eps_scale < 0:
            raise ConfigError(
                f"value_loss_eps_scale: must be >= 0, got {self.value_loss_eps_scale}"
            )
        if self.contraction_trials < 1:
            raise ConfigError(f"contraction_trials: must be >= 1, got {self.contraction_trials}")
        if self.adversarial_generations < 1:
            raise ConfigError(
                f"adversarial_generations: must be >= 1, got {self.adversarial_generations}"
            )
        if self.adversarial_bound <= 0:
            raise ConfigError(f"adversarial_bound: must be positive, got {self.adversarial_bound}")
        if self.adversarial_population < 0:
            raise ConfigError(
                f"adversarial_population: must be >= 0, got {self.adversarial_population}"
            )
        grid_only = ("transfer_test", "perturb_sweep", "scaling")
        if self.suite in grid_only and self.environment != "grid":
            raise ConfigError(
                f"environment: suite {self.suite!r} needs the grid environment"
            )
        if self.suite == "adversarial" and self.environment != "random":
            raise ConfigError("environment: the adversarial suite needs the random environment")


_CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_INT_FIELDS = {
    "side", "goal", "n_states", "n_actions", "seed", "contraction_trials",
    "adversarial_generations", "adversarial_population",
}
_FLOAT_FIELDS = {
    "gamma", "slip", "goal_reward", "perturbed_slip", "value_loss_eps_scale",
    "metric_tolerance", "vi_tolerance", "drift_tolerance", "adversarial_bound",
    "adversarial_tol", "search_metric_tolerance", "search_vi_tolerance",
}


def config_from_toml(path) -> ExperimentConfig:
    """Load an ExperimentConfig from a flat TOML file.

    Unknown keys and malformed values raise ConfigError naming the key, so
    typos surface instead of silently falling back to defaults.
    """
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid TOML: {exc}") from exc
    unknown = sorted(set(data) - set(_CONFIG_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    if "suite" not in data:
        raise ConfigError("suite: missing required key")
    cooked = {}
    for key, value in data.items():
        try:
            if key in _INT_FIELDS:
                if isinstance(value, float) and not value.is_integer():
                    raise ValueError("not an integer")
                cooked[key] = int(value)
            elif key in _FLOAT_FIELDS:
                cooked[key] = float(value)
            elif key in ("perturb_slips", "epsilons"):
                cooked[key] = tuple(float(v) for v in value)
            elif isinstance(value, str):
                cooked[key] = value
            else:
                raise ValueError(f"expected a string, got {type(value).__name__}")
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: bad value {value!r} ({exc})") from exc
    return ExperimentConfig(**cooked)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    doc = dataclasses.asdict(cfg)
    doc["perturb_slips"] = list(cfg.perturb_slips)
    doc["epsilons"] = list(cfg.epsilons)
    return doc


def build_environment(cfg: ExperimentConfig) -> FiniteMdp:
    if cfg.environment == "grid":
        spec = GridWorldSpec(
            side=cfg.side,
            slip=cfg.slip,
            gamma=cfg.gamma,
            goal=None if cfg.goal == -1 else cfg.goal,
            goal_reward=cfg.goal_reward,
        )
        return make_grid_world(spec)
    if cfg.environment == "chain":
        return make_chain_example(cfg.gamma)
    return make_random_mdp(cfg.n_states, cfg.n_actions, cfg.gamma, cfg.seed)


def resolve_output_dir(cfg: ExperimentConfig, override=None) -> Path:
    if override:
        return Path(override)
    if cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(os.environ.get(OUTPUT_DIR_ENV, "out"))


@dataclass
class SuiteReport:
    """In-memory mirror of report.json plus the volatile timings."""

    suite: str
    config: dict
    rows: dict
    flags: dict
    artifacts: tuple
    timings: dict

    @property
    def ok(self) -> bool:
        return all(self.flags.values())


def _jsonify(obj):
    """JSON-safe deep copy: numpy scalars/arrays to builtins, nan to None."""
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return None if math.isnan(x) else x
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonify(doc), fh, indent=1, sort_keys=True)
        fh.write("\n")


class _Stopwatch:
    def __init__(self):
        self.laps = {}

    def time(self, name):
        return _Lap(self, name)


class _Lap:
    def __init__(self, watch, name):
        self.watch = watch
        self.name = name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.watch.laps[self.name] = self.watch.laps.get(self.name, 0.0) + (
            time.perf_counter() - self.t0
        )
        return False


def _metric_core(cfg: ExperimentConfig, m: FiniteMdp, out: Path, watch: _Stopwatch):
    """Shared metric rows and flags; returns (run, rows, flags, artifacts)."""
    with watch.time("metric_seconds"):
        run = metric.solve_metric(m, cfg.metric_tolerance)
    mean, std = diagnostics.summary_stats(run.final)
    with watch.time("spectral_seconds"):
        spec = diagnostics.spectral_report(run.final, mode="raw")
    with watch.time("contraction_seconds"):
        est = metric.estimate_contraction(
            m, trials=cfg.contraction_trials, seed=cfg.seed, run=run
        )
    rows = {
        "array_mean": mean,
        "array_std": std,
        "diameter": run.final.diameter,
        "iterations": run.iterations,
        "certified_error": run.certified_error,
        "frobenius": spec.frobenius,
        "spectral_radius": spec.spectral_radius,
        "condition_number": spec.condition_number,
        "eigen_entropy": spec.eigen_entropy,
        "empirical_contraction": est.residual_rate,
        "contraction_pair_max": est.pair_ratio_max,
    }
    flags = {
        "metric_valid": run.final.is_valid(),
        "contraction_rate_within_gamma": est.residual_rate <= m.gamma + CONTRACTION_SLACK,
        "contraction_pairs_within_gamma": est.pair_ratio_max <= m.gamma + PAIR_SLACK,
        "spectral_reconstruction_ok": spec.reconstruction_error
        <= SPECTRAL_REL_TOL * max(1.0, spec.frobenius),
    }
    metric.metric_to_csv(run.final, out / "metric.csv")
    metric.residuals_to_csv(run, out / "residuals.csv")
    return run, rows, flags, ["metric.csv", "residuals.csv"]


def _perturbed_grid(cfg: ExperimentConfig, slip: float) -> FiniteMdp:
    spec = GridWorldSpec(
        side=cfg.side,
        slip=slip,
        gamma=cfg.gamma,
        goal=None if cfg.goal == -1 else cfg.goal,
        goal_reward=cfg.goal_reward,
    )
    return make_grid_world(spec)


def _run_metric_baseline(cfg, m, out, watch):
    run, rows, flags, artifacts = _metric_core(cfg, m, out, watch)
    spec = diagnostics.spectral_report(run.final, mode="raw")
    _write_json(out / "spectral.json", spec.to_dict())
    artifacts.append("spectral.json")
    return rows, flags, artifacts


def _run_transfer_test(cfg, m, out, watch):
    run, rows, flags, artifacts = _metric_core(cfg, m, out, watch)
    perturbed = _perturbed_grid(cfg, cfg.perturbed_slip)
    with watch.time("perturbed_metric_seconds"):
        run_p = metric.solve_metric(perturbed, cfg.metric_tolerance)
    mean_p, std_p = diagnostics.summary_stats(run_p.final)
    rows.update(
        {
            "perturbed_slip": cfg.perturbed_slip,
            "array_mean_perturbed": mean_p,
            "array_std_perturbed": std_p,
            "transfer_mean_delta": mean_p - rows["array_mean"],
            "transfer_std_delta": std_p - rows["array_std"],
        }
    )
    flags["perturbed_metric_valid"] = run_p.final.is_valid()
    metric.metric_to_csv(run_p.final, out / "metric_perturbed.csv")
    artifacts.append("metric_perturbed.csv")
    return rows, flags, artifacts


def _run_composition(cfg, m, out, watch):
    run, rows, flags, artifacts = _metric_core(cfg, m, out, watch)
    per_eps = []
    worst_rerun = 0.0
    worst_requotient = 0.0
    all_ok = True
    for eps in cfg.epsilons:
        with watch.time("idempotence_seconds"):
            rep = quotient.idempotence_check(m, eps, cfg.drift_tolerance, run=run)
        per_eps.append(
            {
                "epsilon": rep.epsilon,
                "rerun_metric_drift": rep.rerun_metric_drift,
                "rerun_dq_drift": rep.rerun_dq_drift,
                "requotient_singleton": rep.requotient_singleton,
                "requotient_dq_drift": rep.requotient_dq_drift,
                "abstract_n_classes": rep.abstract_n_classes,
                "abstract_bijection": rep.abstract_bijection,
                "abstract_dq_drift": rep.abstract_dq_drift,
                "ok": rep.ok,
            }
        )
        worst_rerun = max(worst_rerun, rep.rerun_metric_drift, rep.rerun_dq_drift)
        worst_requotient = max(worst_requotient, rep.requotient_dq_drift)
        all_ok = all_ok and rep.ok
        q = quotient.build_quotient(run.final, eps)
        name = f"quotient_{eps:g}.json"
        quotient.save_quotient(q, out / name)
        artifacts.append(name)
    rows["per_epsilon"] = per_eps
    rows["rerun_drift_max"] = worst_rerun
    rows["requotient_drift_max"] = worst_requotient
    flags["idempotence_ok"] = all_ok
    flags["drift_within_tolerance"] = (
        worst_rerun <= cfg.drift_tolerance and worst_requotient <= cfg.drift_tolerance
    )
    return rows, flags, artifacts


def _run_backward_stability(cfg, m, out, watch):
    run, rows, flags, artifacts = _metric_core(cfg, m, out, watch)
    per_eps = []
    worst = 0.0
    partitions_ok = True
    for eps in cfg.epsilons:
        with watch.time("backward_seconds"):
            q = quotient.build_quotient(run.final, eps)
            pulled = quotient.pullback_metric(q, m.n_states)
            q2 = quotient.build_quotient(pulled, eps)
            pulled2 = quotient.pullback_metric(q2, m.n_states)
            partition_match = bool(np.array_equal(q.partition, q2.partition))
            drift = float(np.max(np.abs(pulled2.d - pulled.d))) if partition_match else math.inf
            # informational: metric of the aggregated MDP, pulled back
            abstract = quotient.build_abstract_mdp(m, q.partition)
            run_a = metric.solve_metric(abstract, cfg.metric_tolerance)
            abstract_drift = float(
                np.max(np.abs(run_a.final.d[np.ix_(q.partition, q.partition)] - pulled.d))
            )
        per_eps.append(
            {
                "epsilon": eps,
                "n_classes": q.n_classes,
                "partition_match": partition_match,
                "pullback_drift": drift,
                "abstract_metric_drift": abstract_drift,
            }
        )
        worst = max(worst, drift)
        partitions_ok = partitions_ok and partition_match
    rows["per_epsilon"] = per_eps
    rows["backward_drift_max"] = worst
    flags["partition_reconstructed"] = partitions_ok
    flags["drift_within_tolerance"] = worst <= cfg.drift_tolerance
    return rows, flags, artifacts


def _run_info_theory(cfg, m, out, watch):
    run, rows, flags, artifacts = _metric_core(cfg, m, out, watch)
    per_eps = []
    for eps in cfg.epsilons:
        q = quotient.build_quotient(run.final, eps)
        info = diagnostics.partition_info(run.final, q.partition)
        entry = {"epsilon": eps}
        entry.update(info.to_dict())
        per_eps.append(entry)
    rows["per_epsilon"] = per_eps
    flags["entropies_finite"] = all(math.isfinite(e["size_entropy"]) for e in per_eps)
    _write_json(out / "partitions.json", {"per_epsilon": per_eps})
    artifacts.append("partitions.json")
    return rows, flags, artifacts


def _run_spectral(cfg, m, out, watch):
    run, rows, flags, artifacts = _metric_core(cfg, m, out, watch)
    raw = diagnostics.spectral_report(run.final, mode="raw")
    centered = diagnostics.spectral_report(run.final, mode="double_centered")
    trace_raw = float(np.sum(raw.eigenvalues))
    rows["trace_raw"] = trace_raw
    rows["double_centered"] = centered.to_dict()
    scale = max(1.0, raw.frobenius)
    flags["trace_zero_raw"] = abs(trace_raw) <= SPECTRAL_REL_TOL * scale
    flags["radius_le_frobenius"] = raw.spectral_radius <= raw.frobenius * (1 + 1e-12)
    flags["centered_reconstruction_ok"] = centered.reconstruction_error <= SPECTRAL_REL_TOL * max(
        1.0, centered.frobenius
    )
    _write_json(
        out / "spectral.json",
        {"raw": raw.to_dict(), "double_centered": centered.to_dict()},
    )
    artifacts.append("spectral.json")
    return rows, flags, artifacts


def _run_scaling(cfg, m, out, watch):
    run, rows, flags, artifacts = _metric_core(cfg, m, out, watch)
    sweep = []
    for eps in cfg.epsilons:
        q = quotient.build_quotient(run.final, eps)
        sweep.append(
            {
                "epsilon": eps,
                "n_classes": q.n_classes,
                "compression_ratio": q.compression_ratio,
                "max_intra_diameter": q.max_intra_diameter,
            }
        )
    rows["per_epsilon"] = sweep
    eps_loss = cfg.value_loss_eps_scale * run.final.diameter
    with watch.time("value_loss_seconds"):
        loss = planning.value_loss_report(
            m, eps_loss, vi_tolerance=cfg.vi_tolerance, run=run
        )
    rows.update(
        {
            "value_loss_epsilon": eps_loss,
            "value_loss": loss.loss,
            "bound_eps": loss.bound_eps,
            "bound_diam": loss.bound_diam,
            "value_loss_classes": loss.n_classes,
        }
    )
    flags["value_loss_within_diam_bound"] = loss.diam_bound_ok
    with watch.time("vi_seconds"):
        v = planning.value_iteration(m, cfg.vi_tolerance)
        pi = planning.greedy_policy(m, v)
    planning.values_to_csv(out / "values.csv", v, pi)
    artifacts.append("values.csv")
    return rows, flags, artifacts


def _run_compression_sweep(cfg, m, out, watch):
    run, rows, flags, artifacts = _metric_core(cfg, m, out, watch)
    sweep = []
    counts = []
    for eps in cfg.epsilons:
        q = quotient.build_quotient(run.final, eps)
        counts.append(q.n_classes)
        sweep.append(
            {
                "epsilon": eps,
                "n_classes": q.n_classes,
                "compression_ratio": q.compression_ratio,
                "max_intra_diameter": q.max_intra_diameter,
            }
        )
        name = f"quotient_{eps:g}.json"
        quotient.save_quotient(q, out / name)
        artifacts.append(name)
    rows["per_epsilon"] = sweep
    flags["classes_monotone_nonincreasing"] = all(
        a >= b for a, b in zip(counts, counts[1:])
    )
    return rows, flags, artifacts


def _run_perturb_sweep(cfg, m, out, watch):
    run, rows, flags, artifacts = _metric_core(cfg, m, out, watch)
    base_mean = rows["array_mean"]
    per_slip = []
    all_valid = True
    for slip in cfg.perturb_slips:
        with watch.time("perturbed_metric_seconds"):
            run_p = metric.solve_metric(_perturbed_grid(cfg, slip), cfg.metric_tolerance)
        mean_p, std_p = diagnostics.summary_stats(run_p.final)
        all_valid = all_valid and run_p.final.is_valid()
        per_slip.append(
            {
                "slip": slip,
                "array_mean": mean_p,
                "array_std": std_p,
                "mean_delta": mean_p - base_mean,
            }
        )
    rows["per_slip"] = per_slip
    flags["perturbed_metrics_valid"] = all_valid
    return rows, flags, artifacts


@dataclass(frozen=True)
class AdversarialReport:
    """Outcome of the evolutionary reward search.

    worst_rewards is the reward matrix of the worst instance found (the
    transition tensor and gamma come from the seeded base environment);
    objective_trace is the best objective per generation; invariant_report
    holds the strict-tolerance verification of that instance (contraction,
    value-Lipschitz, diameter-form value-loss bound) plus the search
    hyperparameters.
    """

    worst_rewards: np.ndarray
    objective_trace: np.ndarray
    invariant_report: dict
    best_objective: float
    n_generations: int
    n_evaluations: int
    converged: bool

    @property
    def ok(self) -> bool:
        return all(
            v for k, v in self.invariant_report.items() if k.endswith("_ok")
        )


def verify_instance(
    m: FiniteMdp,
    trials: int = 10,
    seed: int = 0,
    eps_scale: float = 0.1,
    metric_tolerance: float = 1e-9,
    vi_tolerance: float = 1e-9,
) -> dict:
    """Strict-tolerance invariant audit of one MDP: contraction on random
    pseudo-metric pairs, the value-Lipschitz property, and the diameter-form
    value-loss bound. Returns a dict of measurements and *_ok flags."""
    run = metric.solve_metric(m, metric_tolerance)
    est = metric.estimate_contraction(m, trials=trials, seed=seed, run=run)
    v = planning.value_iteration(m, vi_tolerance)
    lip_slack = float(np.max(np.abs(v[:, None] - v[None, :]) - run.final.d))
    eps = eps_scale * run.final.diameter
    loss = planning.value_loss_report(m, eps, vi_tolerance=vi_tolerance, run=run)
    return {
        "contraction_pair_max": est.pair_ratio_max,
        "contraction_ok": est.pair_ratio_max <= m.gamma + PAIR_SLACK,
        "empirical_contraction": est.residual_rate,
        "value_lipschitz_slack": lip_slack,
        "value_lipschitz_ok": lip_slack <= LIPSCHITZ_SLACK,
        "value_loss_epsilon": eps,
        "value_loss": loss.loss,
        "bound_eps": loss.bound_eps,
        "bound_diam": loss.bound_diam,
        "diam_bound_ok": loss.diam_bound_ok,
    }


def adversarial_search(
    cfg: ExperimentConfig, objective=None, callback=None
) -> AdversarialReport:
    """Evolve reward matrices in [-bound, bound]^(n x m) against the pipeline.

    The default objective is the abstraction value loss minus its
    diameter-form bound at eps = value_loss_eps_scale * diameter: positive
    values would witness a violated certificate, so maximizing hunts for
    counterexamples. Candidates run the full pipeline at the (faster) search
    tolerances; the worst instance found is re-verified at the strict
    tolerances and that audit ships in invariant_report.
    """
    base = make_random_mdp(cfg.n_states, cfg.n_actions, cfg.gamma, cfg.seed)
    shape = (cfg.n_states, cfg.n_actions)

    def pipeline_objective(flat: np.ndarray) -> float:
        candidate = FiniteMdp(base.transitions, flat.reshape(shape), cfg.gamma)
        run = metric.solve_metric(candidate, cfg.search_metric_tolerance)
        eps = cfg.value_loss_eps_scale * run.final.diameter
        rep = planning.value_loss_report(
            candidate, eps, vi_tolerance=cfg.search_vi_tolerance, run=run
        )
        return rep.loss - rep.bound_diam

    fn = objective if objective is not None else pipeline_objective
    dim = cfg.n_states * cfg.n_actions
    bounds = np.tile([-cfg.adversarial_bound, cfg.adversarial_bound], (dim, 1))
    result: DeResult = maximize(
        fn,
        bounds,
        seed=cfg.seed,
        max_generations=cfg.adversarial_generations,
        population_size=cfg.adversarial_population or None,
        tol=cfg.adversarial_tol,
        callback=callback,
    )
    worst_rewards = result.best_x.reshape(shape)
    worst = FiniteMdp(base.transitions, worst_rewards, cfg.gamma)
    report = verify_instance(
        worst,
        trials=cfg.contraction_trials,
        seed=cfg.seed,
        eps_scale=cfg.value_loss_eps_scale,
        metric_tolerance=cfg.metric_tolerance,
        vi_tolerance=cfg.vi_tolerance,
    )
    pop = cfg.adversarial_population or min(15 * dim, 300)
    report.update(
        {
            "strategy": "rand/1/bin",
            "mutation": 0.8,
            "crossover": 0.9,
            "population": max(pop, 4),
            "generations_budget": cfg.adversarial_generations,
            "bound": cfg.adversarial_bound,
        }
    )
    return AdversarialReport(
        worst_rewards=worst_rewards,
        objective_trace=result.trace,
        invariant_report=report,
        best_objective=result.best_value,
        n_generations=result.n_generations,
        n_evaluations=result.n_evaluations,
        converged=result.converged,
    )


def _run_adversarial(cfg, m, out, watch):
    with watch.time("search_seconds"):
        rep = adversarial_search(cfg)
    rows = {
        "best_objective": rep.best_objective,
        "n_generations": rep.n_generations,
        "n_evaluations": rep.n_evaluations,
        "converged": rep.converged,
    }
    rows.update(rep.invariant_report)
    flags = {
        "completed": True,
        "contraction_ok": bool(rep.invariant_report["contraction_ok"]),
        "value_lipschitz_ok": bool(rep.invariant_report["value_lipschitz_ok"]),
        "diam_bound_ok": bool(rep.invariant_report["diam_bound_ok"]),
    }
    base = make_random_mdp(cfg.n_states, cfg.n_actions, cfg.gamma, cfg.seed)
    worst = FiniteMdp(
        base.transitions,
        rep.worst_rewards,
        cfg.gamma,
        metadata={"generator": "adversarial-search", "seed": cfg.seed},
    )
    save_mdp(worst, out / "worst_mdp.json")
    with open(out / "trace.csv", "w") as fh:
        fh.write("generation,best_objective\n")
        for i, x in enumerate(rep.objective_trace, start=1):
            fh.write("%d,%.17g\n" % (i, x))
    return rows, flags, ["worst_mdp.json", "trace.csv"]


_RUNNERS = {
    "metric_baseline": _run_metric_baseline,
    "transfer_test": _run_transfer_test,
    "composition": _run_composition,
    "backward_stability": _run_backward_stability,
    "info_theory": _run_info_theory,
    "spectral": _run_spectral,
    "scaling": _run_scaling,
    "compression_sweep": _run_compression_sweep,
    "perturb_sweep": _run_perturb_sweep,
    "adversarial": _run_adversarial,
}


def run_suite(cfg: ExperimentConfig, output_dir=None) -> SuiteReport:
    """Run one suite and write its artifacts.

    report.json is deterministic for a given config (timings and timestamps
    go to metadata.json); the returned SuiteReport mirrors both.
    """
    out_root = resolve_output_dir(cfg, output_dir)
    out = out_root / cfg.suite
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output_dir: cannot create {out}: {exc}") from exc

    watch = _Stopwatch()
    m = build_environment(cfg)
    with watch.time("total_seconds"):
        rows, flags, artifacts = _RUNNERS[cfg.suite](cfg, m, out, watch)

    artifacts = tuple(["report.json", "metadata.json"] + list(artifacts))
    report = SuiteReport(
        suite=cfg.suite,
        config=config_to_dict(cfg),
        rows=rows,
        flags=flags,
        artifacts=artifacts,
        timings=dict(watch.laps),
    )
    _write_json(
        out / "report.json",
        {
            "suite": report.suite,
            "config": report.config,
            "rows": report.rows,
            "flags": report.flags,
            "artifacts": list(report.artifacts),
        },
    )
    _write_json(
        out / "metadata.json",
        {
            "timings_seconds": report.timings,
            "written_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        },
    )
    return report


def mdp_document(m: FiniteMdp) -> dict:
    """Convenience passthrough so callers don't need mdp imports for dumps."""
    return mdp_to_dict(m)
