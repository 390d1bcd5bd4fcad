"""Domain types shared across the package and alert-to-trial outcome derivation."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence


class FileType(str, Enum):
    COMPRESSED = "Compressed"
    HTML = "HTML"
    IMAGE = "Image"
    JAR = "JAR"
    MSOFFICE = "MSOffice"
    PDF = "PDF"
    PE = "PE"
    SOURCECODE = "SourceCode"
    TEXT = "Text"
    XML = "XML"
    OTHER = "Other"


class Label(str, Enum):
    MALICIOUS = "Malicious"
    BENIGN = "Benign"


class Phase(str, Enum):
    PRE_EXECUTION = "PreExecution"
    IN_WINDOW = "InWindow"
    POST_CLOSE = "PostClose"
    NEVER = "Never"


class ModelError(ValueError):
    pass


class MismatchedIdentity(ModelError):
    pass


class InvalidTimestamps(ModelError):
    pass


class AbortedTrial(ModelError):
    pass


@dataclass(frozen=True)
class FileSample:
    file_id: str
    display_name: str
    file_type: FileType
    label: Label
    zero_day: bool = False
    size_bytes: int = 0

    def __post_init__(self):
        if self.size_bytes < 0:
            raise ModelError(f"{self.file_id}: negative size_bytes")
        if self.zero_day and (self.label is not Label.MALICIOUS or self.file_type is not FileType.PE):
            raise ModelError(f"{self.file_id}: zero-day files must be malicious PEs")

    @property
    def malicious(self) -> bool:
        return self.label is Label.MALICIOUS


@dataclass(frozen=True)
class ResourceSample:
    t: float
    cpu_fraction: float
    ram_bytes: float = 0.0
    hdd_read_bytes: float = 0.0
    hdd_write_bytes: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.cpu_fraction <= 1.0:
            raise ModelError(f"cpu_fraction {self.cpu_fraction} outside [0, 1]")
        if min(self.ram_bytes, self.hdd_read_bytes, self.hdd_write_bytes) < 0:
            raise ModelError("resource figures must be nonnegative")


@dataclass(frozen=True)
class StageEntry:
    stage: str
    attempts: int
    disposition: str  # "Completed" or "Skipped"


@dataclass(frozen=True)
class TrialRecord:
    """Timestamps and measurements for one (tool, file) trial.

    Times are seconds on the trial's own clock; the tables written by the
    CLI use t_download = 0.
    """

    tool_id: str
    file_id: str
    t_download: float
    t_execute: float
    t_close: float
    resource_series: tuple[ResourceSample, ...] = ()
    stage_history: tuple[StageEntry, ...] = ()
    aborted: bool = False

    @property
    def key(self) -> tuple[str, str]:
        return (self.tool_id, self.file_id)

    def timestamps_valid(self) -> bool:
        return self.t_download < self.t_execute < self.t_close

    @property
    def duration_s(self) -> float:
        return self.t_close - self.t_download


@dataclass(frozen=True)
class AmbientProfile:
    tool_id: str
    duration_s: float = 300.0
    mean_cpu_fraction: float = 0.0
    mean_ram_bytes: float = 0.0
    mean_hdd_read_bytes_per_s: float = 0.0
    mean_hdd_write_bytes_per_s: float = 0.0

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ModelError(f"{self.tool_id}: ambient duration must be positive")
        means = (
            self.mean_cpu_fraction,
            self.mean_ram_bytes,
            self.mean_hdd_read_bytes_per_s,
            self.mean_hdd_write_bytes_per_s,
        )
        if min(means) < 0:
            raise ModelError(f"{self.tool_id}: ambient means must be nonnegative")


@dataclass(frozen=True)
class AlertEvent:
    tool_id: str
    file_id: str
    t_alert: float

    @property
    def key(self) -> tuple[str, str]:
        return (self.tool_id, self.file_id)


@dataclass(frozen=True)
class DetectionOutcome:
    tool_id: str
    file_id: str
    phase: Phase
    ttd_s: Optional[float] = None

    @property
    def detected(self) -> bool:
        return self.phase is not Phase.NEVER

    def alert_time(self, t_download: float) -> Optional[float]:
        return None if self.ttd_s is None else t_download + self.ttd_s


def classify_phase(t_alert: float, t_download: float, t_execute: float, t_close: float) -> Phase:
    """Place an alert time into exactly one detection phase."""
    if t_alert < t_execute:
        return Phase.PRE_EXECUTION
    if t_alert <= t_close:
        return Phase.IN_WINDOW
    return Phase.POST_CLOSE


def derive_outcome(trial: TrialRecord, alerts: Iterable[AlertEvent]) -> DetectionOutcome:
    """Classify the earliest alert for ``trial`` against its timestamps."""
    if trial.aborted:
        raise AbortedTrial(f"{trial.key}: aborted trials carry no outcome")
    if not trial.timestamps_valid():
        raise InvalidTimestamps(
            f"{trial.key}: need t_download < t_execute < t_close, got "
            f"{trial.t_download}, {trial.t_execute}, {trial.t_close}"
        )
    first: Optional[float] = None
    for alert in alerts:
        if alert.key != trial.key:
            raise MismatchedIdentity(f"alert {alert.key} does not belong to trial {trial.key}")
        if first is None or alert.t_alert < first:
            first = alert.t_alert
    if first is None:
        return DetectionOutcome(trial.tool_id, trial.file_id, Phase.NEVER, None)
    # alerts stamped before delivery (clock skew) are clamped to delivery
    t_alert = max(first, trial.t_download)
    phase = classify_phase(t_alert, trial.t_download, trial.t_execute, trial.t_close)
    return DetectionOutcome(trial.tool_id, trial.file_id, phase, t_alert - trial.t_download)


def dedupe_alerts(alerts: Iterable[AlertEvent]) -> dict[tuple[str, str], AlertEvent]:
    """Collapse raw alerts to the earliest one per (tool, file)."""
    earliest: dict[tuple[str, str], AlertEvent] = {}
    for alert in alerts:
        seen = earliest.get(alert.key)
        if seen is None or alert.t_alert < seen.t_alert:
            earliest[alert.key] = alert
    return earliest


@dataclass(frozen=True)
class Violation:
    kind: str  # duplicate-id, dangling-reference, ordering, resource-bounds
    subject: str
    detail: str

    def __str__(self) -> str:
        return f"{self.kind}: {self.subject}: {self.detail}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    def add(self, kind: str, subject: str, detail: str) -> None:
        self.violations.append(Violation(kind, subject, detail))

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return len(self.violations)

    def by_kind(self, kind: str) -> list[Violation]:
        return [v for v in self.violations if v.kind == kind]


def validate_dataset(
    files: Sequence[FileSample],
    trials: Sequence[TrialRecord],
    alerts: Sequence[AlertEvent],
    ambients: Sequence[AmbientProfile] = (),
) -> ValidationReport:
    """Report every integrity problem in a dataset; never raises."""
    report = ValidationReport()

    file_counts = Counter(f.file_id for f in files)
    for file_id, n in sorted(file_counts.items()):
        if n > 1:
            report.add("duplicate-id", f"file {file_id}", f"appears {n} times")
    trial_counts = Counter(t.key for t in trials)
    for key, n in sorted(trial_counts.items()):
        if n > 1:
            report.add("duplicate-id", f"trial {key[0]}/{key[1]}", f"appears {n} times")
    ambient_counts = Counter(a.tool_id for a in ambients)
    for tool_id, n in sorted(ambient_counts.items()):
        if n > 1:
            report.add("duplicate-id", f"ambient {tool_id}", f"appears {n} times")

    known_files = set(file_counts)
    trials_by_key = {t.key: t for t in trials}
    for trial in trials:
        subject = f"trial {trial.tool_id}/{trial.file_id}"
        if trial.file_id not in known_files:
            report.add("dangling-reference", subject, f"unknown file_id {trial.file_id!r}")
        if trial.aborted:
            continue
        if not trial.timestamps_valid():
            report.add(
                "ordering",
                subject,
                f"t_download={trial.t_download} t_execute={trial.t_execute} t_close={trial.t_close}",
            )
            continue
        for sample in trial.resource_series:
            if not trial.t_download <= sample.t <= trial.t_close:
                report.add("resource-bounds", subject, f"sample at t={sample.t} outside trial")
                break

    for alert in alerts:
        subject = f"alert {alert.tool_id}/{alert.file_id}"
        if alert.file_id not in known_files:
            report.add("dangling-reference", subject, f"unknown file_id {alert.file_id!r}")
        elif alert.key not in trials_by_key:
            report.add("dangling-reference", subject, "no matching trial")

    return report
