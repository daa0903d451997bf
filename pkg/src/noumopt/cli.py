"""Command-line frontend for the experiment harness.

Subcommands:
    region     two-user rate-region sweep over the weight grid
    esr-alpha  ergodic sum rate versus CSIT quality sweep
    solve      optimize a single channel realization and print the result
    validate   run the cross-module invariant batteries

Exit codes: 0 success, 1 invalid config, 2 infeasible everywhere,
3 internal numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .ao import optimize_strategy
from .channel import draw_estimate, draw_sample_set
from .experiments import (
    ConfigError,
    ExperimentSpec,
    InfeasibleEverywhereError,
    load_config,
    run_esr_alpha,
    run_region,
    validate,
    write_csv,
    write_manifest,
    write_region_hull,
)
from .strategies import Strategy

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_NUMERICAL = 3


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON config file")
    parser.add_argument("--seed", type=int, help="override master seed")
    parser.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    parser.add_argument("--samples", type=int, help="override SAA sample count M")
    parser.add_argument("--realizations", type=int, help="override Monte Carlo realizations")
    parser.add_argument("--strategies", type=str, help="comma-separated strategy list")
    parser.add_argument("--threads", type=int, default=1, help="worker processes")
    parser.add_argument("--max-iters", type=int, help="override AO iteration cap")
    parser.add_argument("--eps", type=float, help="override AO convergence epsilon")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noumopt",
        description="Precoder optimization studies for unicast+multicast MISO downlink",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("region", "esr-alpha", "solve"):
        p = sub.add_parser(name)
        _add_common_flags(p)
        if name == "solve":
            p.add_argument("--strategy", type=str, default="dpcrs1")
            p.add_argument("--realization", type=int, default=0)
    p_val = sub.add_parser("validate")
    p_val.add_argument("--seed", type=int, default=0)
    return parser


def _resolve_spec(args: argparse.Namespace) -> ExperimentSpec:
    if args.config is not None:
        spec = load_config(args.config)
    else:
        raise ConfigError("--config is required for this command")
    updates: dict = {}
    if args.seed is not None:
        updates["system"] = dataclasses.replace(spec.system, master_seed=args.seed)
    if args.samples is not None:
        updates["sample_count"] = args.samples
    if args.realizations is not None:
        updates["num_realizations"] = args.realizations
    if args.strategies is not None:
        try:
            updates["strategies"] = tuple(
                Strategy(s.strip()) for s in args.strategies.split(",") if s.strip()
            )
        except ValueError as exc:
            raise ConfigError(f"unknown strategy: {exc}") from exc
    ao_updates = {}
    if args.max_iters is not None:
        ao_updates["max_iterations"] = args.max_iters
    if args.eps is not None:
        ao_updates["convergence_eps"] = args.eps
    if ao_updates:
        updates["ao"] = dataclasses.replace(spec.ao, **ao_updates)
    if updates:
        spec = dataclasses.replace(spec, **updates)
    return spec


def _cmd_region(args: argparse.Namespace) -> int:
    spec = _resolve_spec(args)
    records = run_region(spec, threads=args.threads)
    out = Path(args.out)
    write_csv(records, out / "region.csv")
    write_manifest(spec, "region", out / "region_manifest.json")
    if spec.convex_hull:
        write_region_hull(records, out / "region_hull.csv")
    print(f"wrote {len(records)} records to {out / 'region.csv'}")
    return EXIT_OK


def _cmd_esr_alpha(args: argparse.Namespace) -> int:
    spec = _resolve_spec(args)
    records = run_esr_alpha(spec, threads=args.threads)
    out = Path(args.out)
    write_csv(records, out / "esr_alpha.csv")
    write_manifest(spec, "esr-alpha", out / "esr_alpha_manifest.json")
    print(f"wrote {len(records)} records to {out / 'esr_alpha.csv'}")
    return EXIT_OK


def _cmd_solve(args: argparse.Namespace) -> int:
    spec = _resolve_spec(args)
    try:
        strategy = Strategy(args.strategy)
    except ValueError as exc:
        raise ConfigError(f"unknown strategy {args.strategy!r}") from exc
    cfg = spec.system
    estimate = draw_estimate(cfg, args.realization)
    samples = draw_sample_set(cfg, estimate, spec.sample_count, args.realization)
    weights = np.ones(cfg.num_users)
    result = optimize_strategy(
        cfg, strategy, estimate, samples, weights,
        spec.multicast_threshold, spec.resolved_unicast_thresholds(), spec.ao,
    )
    summary = {
        "strategy": strategy.value,
        "status": result.status,
        "iterations": result.iterations,
        "wasr": result.wasr,
        "per_user_totals": [float(t) for t in result.totals()],
        "common_alloc": [float(c) for c in result.alloc.rates],
        "common_bound": result.report.common_bound,
        "encoding_order": list(result.order) if result.order else None,
        "trace": [float(t) for t in result.trace],
        "kkt_residual": result.last_kkt_residual,
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK if result.status != "infeasible" else EXIT_INFEASIBLE


def _cmd_validate(args: argparse.Namespace) -> int:
    checks = validate(seed=args.seed)
    all_ok = True
    for check in checks:
        flag = "PASS" if check.passed else "FAIL"
        print(f"[{flag}] {check.name}: {check.detail}")
        all_ok &= check.passed
    return EXIT_OK if all_ok else EXIT_NUMERICAL


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        if args.command == "region":
            return _cmd_region(args)
        if args.command == "esr-alpha":
            return _cmd_esr_alpha(args)
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "validate":
            return _cmd_validate(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleEverywhereError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
