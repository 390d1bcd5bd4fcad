"""Command-line entry point: run, score, stats, sweep, report, validate."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, ExperimentConfig, load_config
from .costmodel import CostModelError, CurveMode, parse_grid, sweep_zero_day_cost
from .metrics import aggregate_metrics, read_events
from .pipeline import derive_outcomes, run_simulation, score_dataset
from .report import (
    IoFailure,
    breakdown_csv,
    build_stats,
    render_report,
    sweep_csv,
    table1_csv,
    table2_csv,
    table3_csv,
    table4_csv,
)
from .tables import TableError, load_tables, write_tables

COMMANDS = ("run", "score", "stats", "sweep", "report", "validate")
METRICS_FILE = "metrics.jsonl"


class UsageError(Exception):
    pass


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="detector-eval", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="TOML experiment config (default: desk preset)")
    parser.add_argument("--seed", type=_u64, help="master seed, overrides the config")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument("--data", type=Path, help="directory holding the raw tables (default: --out)")
    parser.add_argument("--mode", choices=[m.value for m in CurveMode], help="attack-cost curve parameterization")
    parser.add_argument("--zero-day-max", type=float, help="maximum attack cost for zero-day malware, dollars")
    parser.add_argument("--zero-day-fraction", type=float, help="share of malware treated as zero-day")
    parser.add_argument("--grid", help="sweep grid lo:hi:n")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.mode is not None:
        cfg = replace(cfg, mode=CurveMode(args.mode))
    annual = cfg.annual
    if args.zero_day_max is not None:
        annual = replace(annual, zero_day_max_cost=args.zero_day_max)
    if args.zero_day_fraction is not None:
        annual = replace(annual, zero_day_fraction_of_malware=args.zero_day_fraction)
    return replace(cfg, annual=annual)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _ordered_tools(cfg: ExperimentConfig, present: Sequence[str]) -> list[str]:
    known = [t for t in cfg.tools if t in present]
    return known + sorted(t for t in present if t not in known)


def _sweep(cfg, scores, grid_text):
    annual = cfg.annual
    if annual.zero_day_fraction_of_malware == 0:
        annual = replace(annual, zero_day_fraction_of_malware=cfg.sweep.zero_day_fraction)
    ml = cfg.sweep.ml_tool if cfg.sweep.ml_tool in scores else None
    sig = cfg.sweep.signature_tool if cfg.sweep.signature_tool in scores else None
    return sweep_zero_day_cost(scores, parse_grid(grid_text or cfg.sweep.grid), annual, ml, sig)


def cmd_run(cfg: ExperimentConfig, args) -> int:
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    with open(out / METRICS_FILE, "w", encoding="utf-8") as metrics:
        run = run_simulation(cfg, metrics)
    write_tables(out, run.dataset)
    summary = aggregate_metrics(run.sink.events, cfg.limits)
    _write(out / "metrics_summary.json", json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n")
    print(
        f"run: {len(run.results.results)} trials ({len(run.results.aborted)} aborted), "
        f"{len(run.sink)} metrics events, simulated {run.results.end_time:.0f}s -> {out}"
    )
    return 0


def _load(args):
    data = args.data or args.out
    dataset = load_tables(data)
    counts = ", ".join(f"{k}={v}" for k, v in dataset.row_counts().items())
    print(f"loaded {data}: {counts}")
    return dataset


def cmd_validate(cfg, args) -> int:
    _load(args)
    print("validate: ok")
    return 0


def _scored(cfg, args):
    dataset = _load(args)
    outcomes = derive_outcomes(dataset)
    scores = score_dataset(dataset, cfg, outcomes)
    tools = _ordered_tools(cfg, list(scores))
    return dataset, outcomes, scores, tools


def cmd_score(cfg, args) -> int:
    _, _, scores, tools = _scored(cfg, args)
    breakdowns = {t: scores[t].breakdown(cfg.annual) for t in tools}
    averages = {t: scores[t].averages(cfg.annual.zero_day_max_cost) for t in tools}
    _write(args.out / "breakdown.csv", breakdown_csv(tools, breakdowns))
    _write(args.out / "table1.csv", table1_csv(tools, averages))
    print(f"score: wrote breakdown.csv and table1.csv for {len(tools)} tools -> {args.out}")
    return 0


def _aborted(dataset):
    return [t.key for t in dataset.trials if t.aborted]


def cmd_stats(cfg, args) -> int:
    dataset, outcomes, scores, tools = _scored(cfg, args)
    stats = build_stats(outcomes.values(), dataset.file_map, tools, _aborted(dataset))
    breakdowns = {t: scores[t].breakdown(cfg.annual) for t in tools}
    _write(args.out / "table2.csv", table2_csv(tools, breakdowns, stats))
    _write(args.out / "table3.csv", table3_csv(stats))
    _write(args.out / "table4.csv", table4_csv(stats))
    print(f"stats: wrote table2.csv, table3.csv, table4.csv -> {args.out}")
    return 0


def cmd_sweep(cfg, args) -> int:
    _, _, scores, _ = _scored(cfg, args)
    result = _sweep(cfg, scores, args.grid)
    _write(args.out / "sweep.csv", sweep_csv(result))
    if result.crossover_exact is None:
        print(f"sweep: no crossover between {result.ml_tool} and {result.signature_tool} on the grid")
    else:
        print(f"sweep: crossover at zero-day maximum {result.crossover_exact:.2f} dollars")
    return 0


def cmd_report(cfg, args) -> int:
    dataset, outcomes, scores, tools = _scored(cfg, args)
    stats = build_stats(outcomes.values(), dataset.file_map, tools, _aborted(dataset))
    breakdowns = {t: scores[t].breakdown(cfg.annual) for t in tools}
    averages = {t: scores[t].averages(cfg.annual.zero_day_max_cost) for t in tools}
    sweep = _sweep(cfg, scores, args.grid)
    paths = render_report(breakdowns, stats, args.out, averages, sweep)
    metrics_log = (args.data or args.out) / METRICS_FILE
    if metrics_log.exists():
        summary = aggregate_metrics(read_events(metrics_log), cfg.limits)
        _write(args.out / "metrics_summary.json", json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"report: wrote {', '.join(sorted(p.name for p in paths.values()))} -> {args.out}")
    print(paths["summary"].read_text(encoding="utf-8"), end="")
    return 0


HANDLERS = {
    "run": cmd_run,
    "score": cmd_score,
    "stats": cmd_stats,
    "sweep": cmd_sweep,
    "report": cmd_report,
    "validate": cmd_validate,
}


def dispatch(command: str, config: ExperimentConfig, args: argparse.Namespace) -> int:
    if command not in HANDLERS:
        raise UsageError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    return HANDLERS[command](config, args)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        return dispatch(args.command, cfg, args)
    except (UsageError, ConfigError, TableError, CostModelError, IoFailure, OSError, ValueError) as exc:
        print(f"detector-eval {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
