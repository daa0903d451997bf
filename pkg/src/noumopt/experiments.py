"""Experiment harness: Monte Carlo ergodic rates, rate regions, alpha sweeps.

Every study fans out independent (strategy, grid point, realization) tasks,
each fully determined by the master seed and its indices, and collects the
records in task order, so the emitted CSV is byte-identical across runs and
across worker counts.  Infeasible realizations are recorded with
status=infeasible, never dropped.
"""
from __future__ import annotations

import concurrent.futures
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .ao import AoConfig, AoResult, initialize_precoders, optimize_strategy
from .channel import ChannelEstimate, SystemConfig, draw_estimate, draw_sample_set
from .strategies import PrecoderSet, Strategy, sampled_average_rates, wasr
from .subproblem import build_subproblem, solve as solve_subproblem
from .wmmse import (
    COMMON,
    PRIVATE,
    assemble_coefficients,
    effective_power_T,
    rate_wmmse_identity_check,
    update_equalizers_weights,
    weighted_mse_bits,
    xi_hat,
)

CSV_COLUMNS = (
    "experiment_id", "strategy", "alpha", "weight_u2", "realization", "user",
    "rate_total", "common_c0", "esr", "se", "iters", "status", "seed",
)

DEFAULT_WEIGHT_GRID = tuple(10.0 ** a for a in (-3, -2, -1, -0.5, 0, 0.5, 1, 2, 3))


class ConfigError(ValueError):
    """Invalid or unknown configuration content (CLI exit code 1)."""


class InfeasibleEverywhereError(RuntimeError):
    """Every realization of some (strategy, grid point) was infeasible (exit 2)."""


@dataclass(frozen=True)
class ExperimentSpec:
    system: SystemConfig
    strategies: tuple[Strategy, ...] = (
        Strategy.DPCRS1, Strategy.DPC, Strategy.RS1, Strategy.MULP,
    )
    sample_count: int = 100
    num_realizations: int = 10
    weight_grid: tuple[float, ...] = DEFAULT_WEIGHT_GRID
    alpha_grid: tuple[float, ...] = ()
    multicast_threshold: float = 0.0
    unicast_thresholds: tuple[float, ...] | None = None
    threshold_schedule: tuple[float, ...] | None = None
    ao: AoConfig = field(default_factory=AoConfig)
    precoder_mode: str = "ao"  # "ao" | "fixed-mrt"
    convex_hull: bool = False

    def __post_init__(self):
        if self.sample_count < 1 or self.num_realizations < 1:
            raise ConfigError("sample_count and num_realizations must be >= 1")
        if not self.strategies:
            raise ConfigError("at least one strategy required")
        if self.multicast_threshold < 0:
            raise ConfigError("multicast_threshold must be >= 0")
        if self.unicast_thresholds is not None:
            if len(self.unicast_thresholds) != self.system.num_users:
                raise ConfigError("unicast_thresholds needs one entry per user")
            if any(t < 0 for t in self.unicast_thresholds):
                raise ConfigError("unicast_thresholds must be >= 0")
        if self.threshold_schedule is not None and self.alpha_grid and len(
            self.threshold_schedule
        ) != len(self.alpha_grid):
            raise ConfigError("threshold_schedule needs one entry per alpha grid point")
        if self.precoder_mode not in ("ao", "fixed-mrt"):
            raise ConfigError("precoder_mode must be 'ao' or 'fixed-mrt'")

    def resolved_unicast_thresholds(self) -> np.ndarray:
        if self.unicast_thresholds is None:
            return np.zeros(self.system.num_users)
        return np.asarray(self.unicast_thresholds, dtype=float)


# ---------------------------------------------------------------------------
# Config file handling (strict: unknown keys are errors)

_SYSTEM_KEYS = {
    "num_users", "num_tx_antennas", "snr_db", "csit_alpha",
    "channel_variances", "master_seed",
}
_AO_KEYS = {
    "convergence_eps", "max_iterations", "init_scheme", "subproblem_tol",
    "n_starts", "order_cap",
}
_SPEC_KEYS = {
    "system", "strategies", "sample_count", "num_realizations", "weight_grid",
    "alpha_grid", "multicast_threshold", "unicast_thresholds",
    "threshold_schedule", "ao", "precoder_mode", "convex_hull",
}


def _check_keys(mapping: dict, allowed: set, where: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def spec_from_dict(config: dict) -> ExperimentSpec:
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(config, _SPEC_KEYS, "config")
    if "system" not in config:
        raise ConfigError("config requires a 'system' section")
    sys_cfg = dict(config["system"])
    _check_keys(sys_cfg, _SYSTEM_KEYS, "system")
    try:
        system = SystemConfig(
            num_users=int(sys_cfg["num_users"]),
            num_tx_antennas=int(sys_cfg["num_tx_antennas"]),
            snr_db=float(sys_cfg["snr_db"]),
            csit_alpha=float(sys_cfg["csit_alpha"]),
            channel_variances=tuple(float(v) for v in sys_cfg["channel_variances"]),
            master_seed=int(sys_cfg.get("master_seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid system section: {exc}") from exc

    kwargs: dict = {"system": system}
    if "strategies" in config:
        try:
            kwargs["strategies"] = tuple(Strategy(s) for s in config["strategies"])
        except ValueError as exc:
            raise ConfigError(f"unknown strategy: {exc}") from exc
    for key in ("sample_count", "num_realizations"):
        if key in config:
            kwargs[key] = int(config[key])
    for key in ("weight_grid", "alpha_grid"):
        if key in config:
            kwargs[key] = tuple(float(v) for v in config[key])
    if "multicast_threshold" in config:
        kwargs["multicast_threshold"] = float(config["multicast_threshold"])
    if "unicast_thresholds" in config and config["unicast_thresholds"] is not None:
        kwargs["unicast_thresholds"] = tuple(float(v) for v in config["unicast_thresholds"])
    if "threshold_schedule" in config and config["threshold_schedule"] is not None:
        kwargs["threshold_schedule"] = tuple(float(v) for v in config["threshold_schedule"])
    if "ao" in config:
        ao_cfg = dict(config["ao"])
        _check_keys(ao_cfg, _AO_KEYS, "ao")
        try:
            kwargs["ao"] = AoConfig(**ao_cfg)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid ao section: {exc}") from exc
    if "precoder_mode" in config:
        kwargs["precoder_mode"] = str(config["precoder_mode"])
    if "convex_hull" in config:
        kwargs["convex_hull"] = bool(config["convex_hull"])
    try:
        return ExperimentSpec(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ExperimentSpec:
    try:
        config = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return spec_from_dict(config)


def spec_to_dict(spec: ExperimentSpec) -> dict:
    raw = dataclasses.asdict(spec)
    raw["strategies"] = [s.value for s in spec.strategies]
    raw["system"]["channel_variances"] = list(spec.system.channel_variances)
    return raw


def config_hash(spec: ExperimentSpec) -> str:
    canonical = json.dumps(spec_to_dict(spec), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Task execution

@dataclass(frozen=True)
class ResultRecord:
    """One CSV row: per (strategy, grid point, realization, user)."""

    experiment_id: str
    strategy: str
    alpha: float
    weight_u2: float
    realization: int
    user: int
    rate_total: float
    common_c0: float
    esr: float  # group aggregate, filled after collection
    se: float
    iters: int
    status: str
    seed: int


@dataclass(frozen=True)
class _Task:
    index: int
    spec: ExperimentSpec
    strategy: Strategy
    grid_index: int
    alpha: float
    weight_u2: float   # nan outside region mode
    weights: tuple[float, ...]
    unicast_thresholds: tuple[float, ...]
    realization: int


def _fixed_mrt_precoders(cfg: SystemConfig, estimate: ChannelEstimate) -> PrecoderSet:
    """Equal-power matched filters on the private streams, common stream off."""
    h = estimate.matrix
    n_t, k_users = h.shape
    private = np.zeros((n_t, k_users), dtype=complex)
    per_user = cfg.transmit_power / k_users
    for k in range(k_users):
        norm = np.linalg.norm(h[:, k])
        if norm > 1e-12:
            direction = h[:, k] / norm
        else:
            direction = np.zeros(n_t, dtype=complex)
            direction[k % n_t] = 1.0
        private[:, k] = direction * np.sqrt(per_user)
    return PrecoderSet(np.zeros(n_t, dtype=complex), private, tuple(range(k_users)))


def _run_task(task: _Task) -> tuple[int, list[dict]]:
    spec = task.spec
    cfg = replace(spec.system, csit_alpha=task.alpha)
    estimate = draw_estimate(cfg, task.realization)
    samples = draw_sample_set(cfg, estimate, spec.sample_count, task.realization)
    weights = np.asarray(task.weights)

    if spec.precoder_mode == "fixed-mrt":
        precoders = _fixed_mrt_precoders(cfg, estimate)
        report = sampled_average_rates(task.strategy, samples, precoders)
        totals = report.private_per_user
        c0, iters, status = 0.0, 0, "fixed"
        esr_term = wasr(weights, totals)
    else:
        result: AoResult = optimize_strategy(
            cfg, task.strategy, estimate, samples, weights,
            spec.multicast_threshold, np.asarray(task.unicast_thresholds), spec.ao,
        )
        if result.status == "infeasible":
            totals = np.full(cfg.num_users, np.nan)
            c0, iters, status = np.nan, result.iterations, "infeasible"
            esr_term = np.nan
        else:
            totals = result.totals()
            c0 = result.alloc.multicast
            iters, status = result.iterations, result.status
            esr_term = result.wasr

    rows = [
        {
            "strategy": task.strategy.value,
            "grid_index": task.grid_index,
            "alpha": task.alpha,
            "weight_u2": task.weight_u2,
            "realization": task.realization,
            "user": k,
            "rate_total": float(totals[k]),
            "common_c0": float(c0),
            "group_value": float(esr_term),
            "iters": iters,
            "status": status,
        }
        for k in range(cfg.num_users)
    ]
    return task.index, rows


def _execute(tasks: list[_Task], threads: int) -> list[list[dict]]:
    if threads <= 1:
        return [_run_task(t)[1] for t in tasks]
    out: list[list[dict] | None] = [None] * len(tasks)
    with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
        for idx, rows in pool.map(_run_task, tasks, chunksize=1):
            out[idx] = rows
    return out  # type: ignore[return-value]


def _finalize(
    spec: ExperimentSpec,
    experiment_id: str,
    per_task_rows: list[list[dict]],
) -> list[ResultRecord]:
    """Attach group ESR/SE aggregates and freeze the records."""
    groups: dict[tuple, list[float]] = {}
    for rows in per_task_rows:
        for row in rows:
            if row["user"] == 0:
                key = (row["strategy"], row["grid_index"])
                groups.setdefault(key, []).append(row["group_value"])
    stats: dict[tuple, tuple[float, float]] = {}
    for key, values in groups.items():
        arr = np.array([v for v in values if not math.isnan(v)])
        if arr.size == 0:
            raise InfeasibleEverywhereError(
                f"every realization infeasible for group {key}"
            )
        se = float(np.std(arr, ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
        stats[key] = (float(np.mean(arr)), se)

    records = []
    for rows in per_task_rows:
        for row in rows:
            esr, se = stats[(row["strategy"], row["grid_index"])]
            records.append(
                ResultRecord(
                    experiment_id=experiment_id,
                    strategy=row["strategy"],
                    alpha=row["alpha"],
                    weight_u2=row["weight_u2"],
                    realization=row["realization"],
                    user=row["user"],
                    rate_total=row["rate_total"],
                    common_c0=row["common_c0"],
                    esr=esr,
                    se=se,
                    iters=row["iters"],
                    status=row["status"],
                    seed=spec.system.master_seed,
                )
            )
    return records


@dataclass(frozen=True)
class ErgodicRates:
    """Monte Carlo ergodic rates for one (strategy, weights) configuration."""

    per_user: np.ndarray
    per_user_se: np.ndarray
    esr: float
    esr_se: float
    records: tuple[ResultRecord, ...]


def ergodic_rates(
    spec: ExperimentSpec,
    strategy: Strategy,
    weights: np.ndarray,
    alpha: float | None = None,
    unicast_thresholds: np.ndarray | None = None,
    threads: int = 1,
) -> ErgodicRates:
    """Mean per-user totals and weighted sum over the Monte Carlo realizations.

    Infeasible realizations are skipped from the means but kept as records;
    raises when every realization is infeasible.
    """
    alpha = spec.system.csit_alpha if alpha is None else float(alpha)
    if unicast_thresholds is None:
        unicast_thresholds = spec.resolved_unicast_thresholds()
    tasks = [
        _Task(
            index=r,
            spec=spec,
            strategy=strategy,
            grid_index=0,
            alpha=alpha,
            weight_u2=float("nan"),
            weights=tuple(float(w) for w in np.asarray(weights)),
            unicast_thresholds=tuple(float(t) for t in unicast_thresholds),
            realization=r,
        )
        for r in range(spec.num_realizations)
    ]
    rows = _execute(tasks, threads)
    records = _finalize(spec, "ergodic", rows)
    k = spec.system.num_users
    totals = np.full((spec.num_realizations, k), np.nan)
    for rec in records:
        totals[rec.realization, rec.user] = rec.rate_total
    feasible = ~np.isnan(totals[:, 0])
    if not np.any(feasible):
        raise InfeasibleEverywhereError("all realizations infeasible")
    per_user = totals[feasible].mean(axis=0)
    n = int(np.count_nonzero(feasible))
    per_user_se = (
        totals[feasible].std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(k)
    )
    weighted = totals[feasible] @ np.asarray(weights, dtype=float)
    esr = float(np.mean(weighted))
    esr_se = float(np.std(weighted, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return ErgodicRates(per_user, per_user_se, esr, esr_se, tuple(records))


def run_region(spec: ExperimentSpec, threads: int = 1) -> list[ResultRecord]:
    """Two-user rate-region sweep over the weight grid (u1 = 1, u2 gridded)."""
    if spec.system.num_users != 2:
        raise ConfigError("rate-region mode requires exactly two users")
    experiment_id = f"region-{config_hash(spec)[:12]}"
    thresholds = tuple(float(t) for t in spec.resolved_unicast_thresholds())
    tasks = []
    for s_idx, strategy in enumerate(spec.strategies):
        for g_idx, u2 in enumerate(sorted(spec.weight_grid)):
            for r in range(spec.num_realizations):
                tasks.append(
                    _Task(
                        index=len(tasks),
                        spec=spec,
                        strategy=strategy,
                        grid_index=g_idx,
                        alpha=spec.system.csit_alpha,
                        weight_u2=float(u2),
                        weights=(1.0, float(u2)),
                        unicast_thresholds=thresholds,
                        realization=r,
                    )
                )
    rows = _execute(tasks, threads)
    return _finalize(spec, experiment_id, rows)


def run_esr_alpha(spec: ExperimentSpec, threads: int = 1) -> list[ResultRecord]:
    """ESR-versus-alpha sweep with unit weights and common random numbers.

    The same master seed (hence the same underlying standard-normal draws)
    is reused at every alpha; only the error scaling changes.
    """
    if not spec.alpha_grid:
        raise ConfigError("esr-alpha mode requires a non-empty alpha_grid")
    experiment_id = f"esr-alpha-{config_hash(spec)[:12]}"
    k = spec.system.num_users
    tasks = []
    for strategy in spec.strategies:
        for g_idx, alpha in enumerate(spec.alpha_grid):
            if spec.threshold_schedule is not None:
                thresholds = (float(spec.threshold_schedule[g_idx]),) * k
            else:
                thresholds = tuple(float(t) for t in spec.resolved_unicast_thresholds())
            for r in range(spec.num_realizations):
                tasks.append(
                    _Task(
                        index=len(tasks),
                        spec=spec,
                        strategy=strategy,
                        grid_index=g_idx,
                        alpha=float(alpha),
                        weight_u2=float("nan"),
                        weights=(1.0,) * k,
                        unicast_thresholds=thresholds,
                        realization=r,
                    )
                )
    rows = _execute(tasks, threads)
    return _finalize(spec, experiment_id, rows)


# ---------------------------------------------------------------------------
# Persistence

def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(records: list[ResultRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(CSV_COLUMNS)]
    for rec in records:
        lines.append(",".join(_fmt(getattr(rec, col)) for col in CSV_COLUMNS))
    path.write_text("\n".join(lines) + "\n")


def write_manifest(spec: ExperimentSpec, mode: str, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "mode": mode,
        "config": spec_to_dict(spec),
        "config_hash": config_hash(spec),
        "artifact_version": __version__,
        "csv_columns": list(CSV_COLUMNS),
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


@dataclass(frozen=True)
class RegionPoint:
    """One rate-region point: mean two-user totals at a weight-grid entry."""

    weight_u2: float
    er_user1: float
    er_user2: float
    se_user1: float
    se_user2: float


def region_points(records: list[ResultRecord]) -> dict[str, list[RegionPoint]]:
    """Per-strategy (user-1 ER, user-2 ER) points, sorted by weight.

    Means are over feasible realizations; each coordinate carries its
    standard error.
    """
    grouped: dict[str, dict[float, dict[int, list[float]]]] = {}
    for rec in records:
        if math.isnan(rec.rate_total):
            continue
        grouped.setdefault(rec.strategy, {}).setdefault(rec.weight_u2, {}).setdefault(
            rec.user, []
        ).append(rec.rate_total)
    out: dict[str, list[RegionPoint]] = {}
    for strategy, by_weight in grouped.items():
        points = []
        for u2 in sorted(by_weight):
            users = by_weight[u2]
            if 0 not in users or 1 not in users:
                continue
            a, b = np.array(users[0]), np.array(users[1])
            points.append(
                RegionPoint(
                    weight_u2=u2,
                    er_user1=float(a.mean()),
                    er_user2=float(b.mean()),
                    se_user1=float(a.std(ddof=1) / np.sqrt(a.size)) if a.size > 1 else 0.0,
                    se_user2=float(b.std(ddof=1) / np.sqrt(b.size)) if b.size > 1 else 0.0,
                )
            )
        out[strategy] = points
    return out


def alpha_curves(records: list[ResultRecord]) -> dict[str, list[tuple[float, float, float]]]:
    """Per-strategy (alpha, ESR, SE) curve points, sorted by alpha."""
    seen: dict[str, dict[float, tuple[float, float]]] = {}
    for rec in records:
        seen.setdefault(rec.strategy, {})[rec.alpha] = (rec.esr, rec.se)
    return {
        strategy: [(alpha,) + values[alpha] for alpha in sorted(values)]
        for strategy, values in seen.items()
    }


def upper_right_hull(points: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Non-dominated upper-right convex hull of a 2-D point cloud."""
    pts = sorted(set(points))
    hull: list[tuple[float, float]] = []
    for p in pts:
        while hull and hull[-1][1] <= p[1]:
            hull.pop()
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (p[0] - x1) * (y2 - y1) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def write_region_hull(records: list[ResultRecord], path: str | Path) -> None:
    """Per-strategy hull of the (user-1 ER, user-2 ER) aggregate points."""
    by_strategy = region_points(records)
    lines = ["strategy,er_user1,er_user2"]
    for strategy in sorted(by_strategy):
        points = [(p.er_user1, p.er_user2) for p in by_strategy[strategy]]
        for x, y in upper_right_hull(points):
            lines.append(f"{strategy},{x!r},{y!r}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Validation battery

@dataclass(frozen=True)
class ValidationCheck:
    name: str
    passed: bool
    detail: str


def validate(seed: int = 0) -> list[ValidationCheck]:
    """Run the cross-module invariant batteries; used by the CLI release gate."""
    rng = np.random.default_rng(seed)
    checks: list[ValidationCheck] = []

    # Rate-WMMSE identity on random tuples.
    worst = 0.0
    for _ in range(200):
        k = int(rng.integers(1, 4))
        n_t = int(rng.integers(1, 5))
        strategy = rng.choice([Strategy.DPC, Strategy.DPCRS1, Strategy.RS1, Strategy.MULP])
        order = tuple(rng.permutation(k)) if strategy.uses_dpc else None
        h = rng.standard_normal(n_t) + 1j * rng.standard_normal(n_t)
        e = 0.3 * (rng.standard_normal(n_t) + 1j * rng.standard_normal(n_t))
        prec = PrecoderSet(
            rng.standard_normal(n_t) + 1j * rng.standard_normal(n_t),
            rng.standard_normal((n_t, k)) + 1j * rng.standard_normal((n_t, k)),
            order,
        )
        user = int(rng.integers(k))
        stream = COMMON if rng.random() < 0.5 else PRIVATE
        xi, rate = rate_wmmse_identity_check(strategy, h, e, prec, stream, user)
        worst = max(worst, abs(xi - (1.0 - rate)))
    checks.append(ValidationCheck("rate_wmmse_identity", worst <= 1e-9, f"max |xi-(1-R)| = {worst:.2e}"))

    # xi_hat equals the direct per-sample WMSE average.
    worst = 0.0
    for _ in range(40):
        k, n_t, m = 2, 2, 8
        cfg = SystemConfig(k, n_t, 15.0, 0.5, (1.0,) * k, int(rng.integers(2**31)))
        est = draw_estimate(cfg, 0)
        samples = draw_sample_set(cfg, est, m, 0)
        strategy = rng.choice([Strategy.DPCRS1, Strategy.RS1])
        order = (0, 1) if strategy.uses_dpc else None
        prec = PrecoderSet(
            rng.standard_normal(n_t) + 1j * rng.standard_normal(n_t),
            rng.standard_normal((n_t, k)) + 1j * rng.standard_normal((n_t, k)),
            order,
        )
        eq, wt = update_equalizers_weights(strategy, samples, prec)
        coeffs = assemble_coefficients(strategy, samples, eq, wt, order)
        for user in range(k):
            for s_idx, stream in enumerate((COMMON, PRIVATE)):
                direct = np.mean([
                    weighted_mse_bits(
                        eq.values[mm, user, s_idx], wt.values[mm, user, s_idx],
                        _stream_T(strategy, samples, prec, stream, user, mm),
                        samples.realizations[mm, :, user],
                        prec.common if stream == COMMON else prec.private[:, user],
                    )
                    for mm in range(m)
                ])
                worst = max(worst, abs(xi_hat(coeffs, prec, stream, user) - direct))
    checks.append(ValidationCheck("xi_hat_equivalence", worst <= 1e-10, f"max deviation = {worst:.2e}"))

    # AO monotonicity spot checks.
    worst_dip = 0.0
    for trial in range(3):
        cfg = SystemConfig(2, 2, 20.0, 0.6, (1.0, 1.0), master_seed=seed + trial)
        est = draw_estimate(cfg, 0)
        samples = draw_sample_set(cfg, est, 8, 0)
        res = optimize_strategy(
            cfg, Strategy.DPCRS1, est, samples, np.array([1.0, 1.0]),
            ao=AoConfig(max_iterations=40),
        )
        diffs = np.diff(res.trace)
        if diffs.size:
            worst_dip = max(worst_dip, float(-diffs.min()))
    checks.append(ValidationCheck("ao_monotonicity", worst_dip <= 1e-6, f"worst dip = {worst_dip:.2e}"))

    # Solver KKT residual on fresh subproblems.
    worst = 0.0
    for trial in range(3):
        cfg = SystemConfig(2, 2, 20.0, 0.6, (1.0, 1.0), master_seed=seed + 10 + trial)
        est = draw_estimate(cfg, 0)
        samples = draw_sample_set(cfg, est, 8, 0)
        prec = initialize_precoders(est, Strategy.DPCRS1, cfg, (0, 1))
        eq, wt = update_equalizers_weights(Strategy.DPCRS1, samples, prec)
        coeffs = assemble_coefficients(Strategy.DPCRS1, samples, eq, wt, (0, 1))
        spec = build_subproblem(
            coeffs, np.array([1.0, 1.0]), np.zeros(2), 0.0,
            cfg.transmit_power, Strategy.DPCRS1, (0, 1),
        )
        sol = solve_subproblem(spec, tol=1e-8, initial=prec)
        worst = max(worst, sol.kkt_residual)
    checks.append(ValidationCheck("solver_kkt", worst <= 1e-7, f"max KKT residual = {worst:.2e}"))
    return checks


def _stream_T(strategy, samples, precoders, stream, user, m):
    return effective_power_T(
        strategy, stream, user,
        samples.realizations[m, :, user], samples.errors[m, :, user], precoders,
    )
