"""Detection statistics: confusion counts, time to detect, per-filetype and zero-day cohorts.

Detection means any phase other than Never, so late (post-close) alerts
count as detections everywhere. Undefined ratios are reported as None.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .model import DetectionOutcome, FileSample, FileType, Label


class EmptyCohort(ValueError):
    """A cohort with no malware; recall is undefined there."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def recall(self) -> Optional[float]:
        positives = self.tp + self.fn
        return self.tp / positives if positives else None

    @property
    def precision(self) -> Optional[float]:
        flagged = self.tp + self.fp
        return self.tp / flagged if flagged else None

    @property
    def f1(self) -> Optional[float]:
        # 2PR/(P+R) rewritten in counts, so tp = 0 gives 0 even when P is undefined
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else None

    def require_recall(self) -> float:
        if self.recall is None:
            raise EmptyCohort("cohort contains no malware")
        return self.recall

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall."""
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class CohortFilter:
    """Predicate over files; unset fields match anything."""

    file_type: Optional[FileType] = None
    zero_day: Optional[bool] = None
    label: Optional[Label] = None

    def __call__(self, file: FileSample) -> bool:
        if self.file_type is not None and file.file_type is not self.file_type:
            return False
        if self.zero_day is not None and file.zero_day != self.zero_day:
            return False
        if self.label is not None and file.label is not self.label:
            return False
        return True


ALL_FILES = CohortFilter()
ZERO_DAY_PE = CohortFilter(FileType.PE, zero_day=True, label=Label.MALICIOUS)
PUBLIC_PE = CohortFilter(FileType.PE, zero_day=False, label=Label.MALICIOUS)

Cohort = Callable[[FileSample], bool]


def _file_of(outcome: DetectionOutcome, files: Mapping[str, FileSample]) -> FileSample:
    try:
        return files[outcome.file_id]
    except KeyError:
        raise ValueError(f"outcome for unknown file {outcome.file_id!r}") from None


def _select(
    outcomes: Iterable[DetectionOutcome], files: Mapping[str, FileSample], cohort: Optional[Cohort]
) -> list[tuple[DetectionOutcome, FileSample]]:
    chosen = []
    for o in outcomes:
        f = _file_of(o, files)
        if cohort is None or cohort(f):
            chosen.append((o, f))
    return chosen


def confusion_counts(
    outcomes: Iterable[DetectionOutcome], files: Mapping[str, FileSample], cohort: Optional[Cohort] = None
) -> ConfusionCounts:
    tp = fp = tn = fn = 0
    for o, f in _select(outcomes, files, cohort):
        if f.malicious:
            if o.detected:
                tp += 1
            else:
                fn += 1
        elif o.detected:
            fp += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, tn, fn)


@dataclass(frozen=True)
class DetectionStats:
    recall: Optional[float]
    precision: Optional[float]
    f1: Optional[float]
    counts: ConfusionCounts


def confusion_stats(
    outcomes: Iterable[DetectionOutcome], files: Mapping[str, FileSample], cohort: Optional[Cohort] = None
) -> DetectionStats:
    counts = confusion_counts(outcomes, files, cohort)
    return DetectionStats(counts.recall, counts.precision, counts.f1, counts)


def lower_median(values: Sequence[float]) -> Optional[float]:
    if not values:
        return None
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def median_ttd(
    outcomes: Iterable[DetectionOutcome],
    files: Optional[Mapping[str, FileSample]] = None,
    cohort: Optional[Cohort] = None,
) -> Optional[float]:
    """Lower median time to detect over detected outcomes in the cohort."""
    if cohort is not None and files is None:
        raise ValueError("a cohort filter needs the file table")
    selected = _select(outcomes, files, cohort) if files is not None else [(o, None) for o in outcomes]
    return lower_median([o.ttd_s for o, _ in selected if o.detected and o.ttd_s is not None])


def _by_tool(outcomes: Iterable[DetectionOutcome]) -> dict[str, list[DetectionOutcome]]:
    grouped: dict[str, list[DetectionOutcome]] = defaultdict(list)
    for o in outcomes:
        grouped[o.tool_id].append(o)
    return grouped


# Display names used in the per-filetype table where they differ from the enum value.
FILETYPE_DISPLAY = {FileType.MSOFFICE: "MS-Office", FileType.SOURCECODE: "Source-code"}


def filetype_display(file_type: FileType) -> str:
    return FILETYPE_DISPLAY.get(file_type, file_type.value)


@dataclass(frozen=True)
class FiletypeRecall:
    """Per-filetype recall table; ``rows`` lists (type, malware count) for types with malware."""

    tools: tuple[str, ...]
    rows: tuple[tuple[FileType, int], ...]
    recall: Mapping[str, Mapping[FileType, Optional[float]]]
    counts: Mapping[str, Mapping[FileType, ConfusionCounts]] = field(default_factory=dict)

    def row_label(self, file_type: FileType) -> str:
        n = dict(self.rows)[file_type]
        return f"{filetype_display(file_type)} ({n:,})"


def per_filetype_recall(
    outcomes: Iterable[DetectionOutcome],
    files: Mapping[str, FileSample],
    tools: Optional[Sequence[str]] = None,
) -> FiletypeRecall:
    """Recall per tool and filetype. Types without malware get no row.

    The row count is the number of malware of that type in the file table.
    """
    grouped = _by_tool(outcomes)
    tools = tuple(tools) if tools is not None else tuple(sorted(grouped))
    malware_per_type: dict[FileType, int] = defaultdict(int)
    for f in files.values():
        if f.malicious:
            malware_per_type[f.file_type] += 1
    rows = tuple((ft, malware_per_type[ft]) for ft in FileType if malware_per_type[ft] > 0)
    recall: dict[str, dict[FileType, Optional[float]]] = {}
    counts: dict[str, dict[FileType, ConfusionCounts]] = {}
    for tool in tools:
        recall[tool], counts[tool] = {}, {}
        for ft, _ in rows:
            c = confusion_counts(grouped.get(tool, ()), files, CohortFilter(ft, label=Label.MALICIOUS))
            counts[tool][ft] = c
            recall[tool][ft] = c.recall
    return FiletypeRecall(tools, rows, recall, counts)


def unique_detections(detected: Mapping[str, set]) -> dict[str, int]:
    """Per tool, how many items it detected that no other tool detected."""
    seen_by: dict = defaultdict(int)
    for items in detected.values():
        for item in items:
            seen_by[item] += 1
    return {tool: sum(1 for item in items if seen_by[item] == 1) for tool, items in detected.items()}


@dataclass(frozen=True)
class CohortStats:
    n_malware: int
    recall: Optional[float]
    median_ttd: Optional[float]
    unique: int


ZERO_DAY_COHORTS: tuple[tuple[str, CohortFilter], ...] = (("Zero-day PEs", ZERO_DAY_PE), ("Public PEs", PUBLIC_PE))


@dataclass(frozen=True)
class ZeroDayComparison:
    tools: tuple[str, ...]
    cohorts: tuple[str, ...]
    cells: Mapping[tuple[str, str], CohortStats]  # (tool, cohort) -> stats

    def cell(self, tool: str, cohort: str) -> CohortStats:
        return self.cells[(tool, cohort)]


def zero_day_comparison(
    outcomes: Iterable[DetectionOutcome],
    files: Mapping[str, FileSample],
    tools: Optional[Sequence[str]] = None,
    cohorts: Sequence[tuple[str, CohortFilter]] = ZERO_DAY_COHORTS,
) -> ZeroDayComparison:
    grouped = _by_tool(outcomes)
    tools = tuple(tools) if tools is not None else tuple(sorted(grouped))
    if not tools:
        raise ValueError("zero-day comparison needs at least one tool")
    cells: dict[tuple[str, str], CohortStats] = {}
    for name, cohort in cohorts:
        chosen = {t: _select(grouped.get(t, ()), files, cohort) for t in tools}
        detected = {t: {o.file_id for o, f in pairs if f.malicious and o.detected} for t, pairs in chosen.items()}
        unique = unique_detections(detected)
        for t in tools:
            pairs = chosen[t]
            counts = confusion_counts((o for o, _ in pairs), files)
            cells[(t, name)] = CohortStats(
                n_malware=counts.tp + counts.fn,
                recall=counts.recall,
                median_ttd=median_ttd(o for o, _ in pairs),
                unique=unique[t],
            )
    return ZeroDayComparison(tools, tuple(name for name, _ in cohorts), cells)
