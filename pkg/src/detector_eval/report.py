"""CSV tables in the reference report layouts, plus a plain-text summary."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

from .costmodel import TABLE2_COST_ROWS, AnnualCostBreakdown, AverageCosts, SweepResult
from .model import DetectionOutcome, FileSample
from .stats import (
    DetectionStats,
    FiletypeRecall,
    ZeroDayComparison,
    confusion_stats,
    median_ttd,
    per_filetype_recall,
    zero_day_comparison,
)
from .tables import dumps_csv, fmt_float

STAT_ROWS = ("Recall", "Precision", "F1 Score", "Median Time to Detect (s)")
TABLE1_ROWS = (
    "Ave Benignware Resource Cost",
    "Ave Malware Resource Cost",
    "Ave Benignware Detect Cost",
    "Ave Malware Detect Cost",
)
ABSENT = "-"


class IoFailure(OSError):
    pass


@dataclass(frozen=True)
class ReportStats:
    tools: tuple[str, ...] = ()
    detection: Mapping[str, DetectionStats] = field(default_factory=dict)
    ttd: Mapping[str, Optional[float]] = field(default_factory=dict)
    filetype: Optional[FiletypeRecall] = None
    zero_day: Optional[ZeroDayComparison] = None
    aborted: tuple[tuple[str, str], ...] = ()


def build_stats(
    outcomes: Iterable[DetectionOutcome],
    files: Mapping[str, FileSample],
    tools: Optional[Sequence[str]] = None,
    aborted: Iterable[tuple[str, str]] = (),
) -> ReportStats:
    outcomes = list(outcomes)
    if tools is None:
        tools = sorted({o.tool_id for o in outcomes})
    tools = tuple(tools)
    if not tools:
        return ReportStats(aborted=tuple(sorted(aborted)))
    per_tool = {t: [o for o in outcomes if o.tool_id == t] for t in tools}
    return ReportStats(
        tools=tools,
        detection={t: confusion_stats(per_tool[t], files) for t in tools},
        ttd={t: median_ttd(per_tool[t]) for t in tools},
        filetype=per_filetype_recall(outcomes, files, tools),
        zero_day=zero_day_comparison(outcomes, files, tools),
        aborted=tuple(sorted(aborted)),
    )


def _stat(x: Optional[float]) -> str:
    return ABSENT if x is None else f"{x:.5f}"


def _money(x: float) -> str:
    return f"{x:.2f}"


def _pct(x: Optional[float], digits: int) -> str:
    return ABSENT if x is None else f"{100 * x:.{digits}f}%"


def _seconds(x: Optional[float]) -> str:
    return ABSENT if x is None else fmt_float(round(x, 5))


def table1_csv(tools: Sequence[str], averages: Mapping[str, AverageCosts]) -> str:
    rows = []
    if tools:
        getters = (
            lambda a: a.benign_resource,
            lambda a: a.malware_resource,
            lambda a: a.benign_detect,
            lambda a: a.malware_detect,
        )
        for label, get in zip(TABLE1_ROWS, getters):
            rows.append([label] + [f"{get(averages[t]):.6f}" for t in tools])
    return dumps_csv([""] + list(tools), rows)


def breakdown_csv(tools: Sequence[str], breakdowns: Mapping[str, AnnualCostBreakdown]) -> str:
    rows = []
    if tools:
        per_tool = {t: dict(breakdowns[t].rows()) for t in tools}
        rows = [[label] + [_money(per_tool[t][label]) for t in tools] for label in TABLE2_COST_ROWS]
    return dumps_csv([""] + list(tools), rows)


def table2_csv(tools: Sequence[str], breakdowns: Mapping[str, AnnualCostBreakdown], stats: ReportStats) -> str:
    rows = []
    if tools:
        per_tool = {t: dict(breakdowns[t].rows()) for t in tools}
        rows = [[label] + [_money(per_tool[t][label]) for t in tools] for label in TABLE2_COST_ROWS]
        rows.append(["Recall"] + [_stat(stats.detection[t].recall) for t in tools])
        rows.append(["Precision"] + [_stat(stats.detection[t].precision) for t in tools])
        rows.append(["F1 Score"] + [_stat(stats.detection[t].f1) for t in tools])
        rows.append(["Median Time to Detect (s)"] + [_seconds(stats.ttd[t]) for t in tools])
    return dumps_csv([""] + list(tools), rows)


def table3_csv(stats: ReportStats) -> str:
    tools = stats.tools
    rows = []
    zd = stats.zero_day
    if tools and zd is not None:
        for label, cell_value in (
            ("Recall (% Malware Detected)", lambda c: _pct(c.recall, 1)),
            ("Time to Detect Median (s)", lambda c: _seconds(c.median_ttd)),
            ("Malware no other tool detected (#)", lambda c: str(c.unique)),
        ):
            for cohort in zd.cohorts:
                rows.append([label, cohort] + [cell_value(zd.cell(t, cohort)) for t in tools])
    return dumps_csv(["Statistic", "Samples"] + list(tools), rows)


def table4_csv(stats: ReportStats) -> str:
    tools = stats.tools
    rows = []
    ft = stats.filetype
    if tools and ft is not None:
        for file_type, _ in ft.rows:
            rows.append([ft.row_label(file_type)] + [_pct(ft.recall[t][file_type], 2) for t in tools])
    return dumps_csv(["Filetype (# malware)"] + list(tools), rows)


def sweep_csv(sweep: SweepResult) -> str:
    tools = sorted(sweep.totals)
    rows = [[fmt_float(m)] + [_money(sweep.totals[t][i]) for t in tools] for i, m in enumerate(sweep.grid)]
    return dumps_csv(["zero_day_max_cost"] + tools, rows)


def summary_text(
    tools: Sequence[str],
    breakdowns: Mapping[str, AnnualCostBreakdown],
    stats: ReportStats,
    sweep: Optional[SweepResult] = None,
) -> str:
    lines = ["Detector evaluation summary", ""]
    if not tools:
        lines.append("No scored tools.")
    else:
        width = max(len(t) for t in tools)
        lines.append(f"{'tool':<{width}}  {'total cost':>14}  {'recall':>8}  {'precision':>9}  {'f1':>8}")
        for t in sorted(tools, key=lambda t: (breakdowns[t].total, t)):
            d = stats.detection.get(t)
            lines.append(
                f"{t:<{width}}  {breakdowns[t].total:>14,.2f}  {_stat(d and d.recall):>8}  "
                f"{_stat(d and d.precision):>9}  {_stat(d and d.f1):>8}"
            )
    if sweep is not None:
        lines.append("")
        if sweep.crossover_exact is None:
            lines.append(f"Zero-day cost sweep: no crossover between {sweep.ml_tool} and {sweep.signature_tool} on the grid.")
        else:
            lines.append(
                f"Zero-day cost sweep: {sweep.ml_tool} becomes cheaper than {sweep.signature_tool} "
                f"at a zero-day maximum of {sweep.crossover_exact:,.2f} dollars "
                f"(first grid point {fmt_float(sweep.crossover)})."
            )
    lines.append("")
    if stats.aborted:
        lines.append(f"Aborted trials excluded from all statistics: {len(stats.aborted)}")
        lines.extend(f"  {tool}/{file_id}" for tool, file_id in stats.aborted)
    else:
        lines.append("Aborted trials excluded from all statistics: 0")
    return "\n".join(lines) + "\n"


def _write(path: Path, text: str) -> Path:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def render_report(
    breakdowns: Mapping[str, AnnualCostBreakdown],
    stats: ReportStats,
    out_dir: Union[str, Path],
    averages: Optional[Mapping[str, AverageCosts]] = None,
    sweep: Optional[SweepResult] = None,
) -> dict[str, Path]:
    """Write table1-4 CSVs and summary.txt (plus sweep.csv if given); returns the paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out}: {exc}") from exc
    tools = [t for t in stats.tools if t in breakdowns] if stats.tools else sorted(breakdowns)
    paths = {
        "table1": _write(out / "table1.csv", table1_csv(tools if averages else [], averages or {})),
        "table2": _write(out / "table2.csv", table2_csv(tools if stats.tools else [], breakdowns, stats)),
        "table3": _write(out / "table3.csv", table3_csv(stats)),
        "table4": _write(out / "table4.csv", table4_csv(stats)),
        "summary": _write(out / "summary.txt", summary_text(tools, breakdowns, stats, sweep)),
    }
    if sweep is not None:
        paths["sweep"] = _write(out / "sweep.csv", sweep_csv(sweep))
    return paths
