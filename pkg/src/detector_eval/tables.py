"""Reading and writing the four raw tables (plus the resource series) as CSV / JSON Lines.

Times are decimal seconds relative to the trial's delivery. Aborted trials
keep a row in trials.csv with blank times.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence, Union

from .model import (
    AlertEvent,
    AmbientProfile,
    FileSample,
    FileType,
    Label,
    ModelError,
    ResourceSample,
    TrialRecord,
    ValidationReport,
    validate_dataset,
)

PathLike = Union[str, Path]

FILES_COLUMNS = ("file_id", "display_name", "file_type", "label", "zero_day", "size_bytes")
TRIALS_COLUMNS = ("tool_id", "file_id", "t_download", "t_execute", "t_close", "aborted")
RESOURCE_KEYS = ("tool_id", "file_id", "t", "cpu_fraction", "ram_bytes", "hdd_read_bytes", "hdd_write_bytes")
ALERTS_COLUMNS = ("tool_id", "file_id", "t_alert")
AMBIENT_COLUMNS = (
    "tool_id",
    "duration_s",
    "mean_cpu_fraction",
    "mean_ram_bytes",
    "mean_hdd_read_bytes_per_s",
    "mean_hdd_write_bytes_per_s",
)

TABLE_FILES = {
    "files": "files.csv",
    "trials": "trials.csv",
    "resources": "resources.jsonl",
    "alerts": "alerts.csv",
    "ambient": "ambient.csv",
}


class TableError(Exception):
    pass


class ParseError(TableError):
    def __init__(self, path: PathLike, line: int, column: Any, message: str):
        self.path, self.line, self.column = str(path), line, column
        super().__init__(f"{path}:{line}: column {column}: {message}")


class SchemaError(TableError):
    pass


class ValidationError(TableError):
    def __init__(self, report: ValidationReport):
        self.report = report
        lines = [str(v) for v in report.violations[:20]]
        more = len(report) - len(lines)
        if more > 0:
            lines.append(f"... and {more} more")
        super().__init__(f"{len(report)} integrity violation(s):\n  " + "\n  ".join(lines))


@dataclass
class Dataset:
    files: list[FileSample] = field(default_factory=list)
    trials: list[TrialRecord] = field(default_factory=list)
    alerts: list[AlertEvent] = field(default_factory=list)
    ambients: list[AmbientProfile] = field(default_factory=list)

    def validate(self) -> ValidationReport:
        return validate_dataset(self.files, self.trials, self.alerts, self.ambients)

    def row_counts(self) -> dict[str, int]:
        return {
            "files": len(self.files),
            "trials": len(self.trials),
            "resources": sum(len(t.resource_series) for t in self.trials),
            "alerts": len(self.alerts),
            "ambient": len(self.ambients),
        }

    @property
    def file_map(self) -> dict[str, FileSample]:
        return {f.file_id: f for f in self.files}

    @property
    def tools(self) -> list[str]:
        return sorted({t.tool_id for t in self.trials})


# -- formatting ---------------------------------------------------------------


def fmt_float(x: float) -> str:
    """Shortest round-tripping decimal; blank for NaN (absent)."""
    if isinstance(x, float) and math.isnan(x):
        return ""
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


def fmt_bool(b: bool) -> str:
    return "true" if b else "false"


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"not a finite number: {text!r}")
    return value


def _parse_int(text: str) -> int:
    return int(text)


# -- CSV helpers --------------------------------------------------------------


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _read_csv(path: PathLike, columns: Sequence[str]) -> Iterable[tuple[int, dict[str, str]]]:
    """Yield (line number, row) after checking the header names exactly the expected columns."""
    with open(path, encoding="utf-8-sig", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header {','.join(columns)}") from None
        except csv.Error as exc:
            raise ParseError(path, 1, "-", str(exc)) from None
        header = [h.strip() for h in header]
        missing = [c for c in columns if c not in header]
        unknown = [h for h in header if h not in columns]
        if missing or unknown or len(set(header)) != len(header):
            parts = []
            if missing:
                parts.append(f"missing {missing}")
            if unknown:
                parts.append(f"unknown {unknown}")
            if len(set(header)) != len(header):
                parts.append("duplicate column")
            raise SchemaError(f"{path}: bad header ({'; '.join(parts)}); expected {','.join(columns)}")
        while True:
            try:
                values = next(reader)
            except StopIteration:
                return
            except csv.Error as exc:
                raise ParseError(path, reader.line_num, "-", str(exc)) from None
            if not values or values == [""]:
                continue
            if len(values) != len(header):
                raise ParseError(path, reader.line_num, len(values), f"expected {len(header)} fields")
            yield reader.line_num, dict(zip(header, values))


def _field(path: PathLike, line: int, row: Mapping[str, str], name: str, parse: Callable[[str], Any]):
    try:
        return parse(row[name])
    except (ValueError, TypeError) as exc:
        raise ParseError(path, line, name, str(exc)) from None


# -- writers ------------------------------------------------------------------


def write_files(path: PathLike, files: Iterable[FileSample]) -> None:
    _write_csv(
        Path(path),
        FILES_COLUMNS,
        (
            (f.file_id, f.display_name, f.file_type.value, f.label.value, fmt_bool(f.zero_day), str(f.size_bytes))
            for f in files
        ),
    )


def write_trials(path: PathLike, trials: Iterable[TrialRecord]) -> None:
    def row(t: TrialRecord):
        if t.aborted:
            return (t.tool_id, t.file_id, "", "", "", fmt_bool(True))
        return (t.tool_id, t.file_id, fmt_float(t.t_download), fmt_float(t.t_execute), fmt_float(t.t_close), "false")

    _write_csv(Path(path), TRIALS_COLUMNS, (row(t) for t in trials))


def write_resources(path: PathLike, trials: Iterable[TrialRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in trials:
            for s in t.resource_series:
                obj = {
                    "tool_id": t.tool_id,
                    "file_id": t.file_id,
                    "t": s.t,
                    "cpu_fraction": s.cpu_fraction,
                    "ram_bytes": s.ram_bytes,
                    "hdd_read_bytes": s.hdd_read_bytes,
                    "hdd_write_bytes": s.hdd_write_bytes,
                }
                fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def write_alerts(path: PathLike, alerts: Iterable[AlertEvent]) -> None:
    _write_csv(Path(path), ALERTS_COLUMNS, ((a.tool_id, a.file_id, fmt_float(a.t_alert)) for a in alerts))


def write_ambient(path: PathLike, ambients: Iterable[AmbientProfile]) -> None:
    _write_csv(
        Path(path),
        AMBIENT_COLUMNS,
        (
            (
                a.tool_id,
                fmt_float(a.duration_s),
                fmt_float(a.mean_cpu_fraction),
                fmt_float(a.mean_ram_bytes),
                fmt_float(a.mean_hdd_read_bytes_per_s),
                fmt_float(a.mean_hdd_write_bytes_per_s),
            )
            for a in ambients
        ),
    )


def write_tables(out_dir: PathLike, dataset: Dataset) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / fname for name, fname in TABLE_FILES.items()}
    write_files(paths["files"], dataset.files)
    write_trials(paths["trials"], dataset.trials)
    write_resources(paths["resources"], dataset.trials)
    write_alerts(paths["alerts"], dataset.alerts)
    write_ambient(paths["ambient"], dataset.ambients)
    return paths


# -- readers ------------------------------------------------------------------


def _wrap_model_error(path: PathLike, line: int, exc: ModelError | ValueError) -> ParseError:
    return ParseError(path, line, "-", str(exc))


def read_files(path: PathLike) -> list[FileSample]:
    out = []
    for line, row in _read_csv(path, FILES_COLUMNS):
        file_type = _field(path, line, row, "file_type", FileType)
        label = _field(path, line, row, "label", Label)
        zero_day = _field(path, line, row, "zero_day", _parse_bool)
        size = _field(path, line, row, "size_bytes", _parse_int)
        try:
            out.append(FileSample(row["file_id"], row["display_name"], file_type, label, zero_day, size))
        except ValueError as exc:
            raise _wrap_model_error(path, line, exc) from None
    return out


def read_trials(path: PathLike) -> list[TrialRecord]:
    out = []
    for line, row in _read_csv(path, TRIALS_COLUMNS):
        aborted = _field(path, line, row, "aborted", _parse_bool)
        times = []
        for name in ("t_download", "t_execute", "t_close"):
            if aborted and not row[name].strip():
                times.append(math.nan)
            else:
                times.append(_field(path, line, row, name, _parse_float))
        out.append(TrialRecord(row["tool_id"], row["file_id"], *times, aborted=aborted))
    return out


def read_resources(path: PathLike) -> dict[tuple[str, str], list[ResourceSample]]:
    series: dict[tuple[str, str], list[ResourceSample]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, exc.colno, exc.msg) from None
            if not isinstance(obj, dict):
                raise ParseError(path, line_no, 1, "expected a JSON object")
            missing = [k for k in RESOURCE_KEYS if k not in obj]
            unknown = [k for k in obj if k not in RESOURCE_KEYS]
            if missing or unknown:
                raise SchemaError(f"{path}:{line_no}: missing keys {missing}, unknown keys {unknown}")
            try:
                sample = ResourceSample(
                    _parse_float(str(obj["t"])),
                    _parse_float(str(obj["cpu_fraction"])),
                    _parse_float(str(obj["ram_bytes"])),
                    _parse_float(str(obj["hdd_read_bytes"])),
                    _parse_float(str(obj["hdd_write_bytes"])),
                )
            except ValueError as exc:
                raise ParseError(path, line_no, "-", str(exc)) from None
            series.setdefault((str(obj["tool_id"]), str(obj["file_id"])), []).append(sample)
    return series


def read_alerts(path: PathLike) -> list[AlertEvent]:
    return [
        AlertEvent(row["tool_id"], row["file_id"], _field(path, line, row, "t_alert", _parse_float))
        for line, row in _read_csv(path, ALERTS_COLUMNS)
    ]


def read_ambient(path: PathLike) -> list[AmbientProfile]:
    out = []
    for line, row in _read_csv(path, AMBIENT_COLUMNS):
        values = [_field(path, line, row, c, _parse_float) for c in AMBIENT_COLUMNS[1:]]
        try:
            out.append(AmbientProfile(row["tool_id"], *values))
        except ValueError as exc:
            raise _wrap_model_error(path, line, exc) from None
    return out


def table_paths(data_dir: PathLike) -> dict[str, Path]:
    return {name: Path(data_dir) / fname for name, fname in TABLE_FILES.items()}


def load_tables(paths: Union[PathLike, Mapping[str, PathLike]], validate: bool = True) -> Dataset:
    """Load and validate the raw tables from a directory or an explicit name->path map.

    ``resources`` is optional; trials without samples get the ambient imputation when scored.
    """
    if not isinstance(paths, Mapping):
        paths = table_paths(paths)
    paths = {k: Path(v) for k, v in paths.items()}
    for name in ("files", "trials", "alerts", "ambient"):
        if name not in paths or not paths[name].exists():
            raise TableError(f"missing {name} table ({paths.get(name, TABLE_FILES[name])})")
    files = read_files(paths["files"])
    trials = read_trials(paths["trials"])
    series = read_resources(paths["resources"]) if "resources" in paths and paths["resources"].exists() else {}
    attached = []
    for t in trials:
        samples = series.get(t.key)
        if samples:
            samples.sort(key=lambda s: s.t)
            t = TrialRecord(
                t.tool_id, t.file_id, t.t_download, t.t_execute, t.t_close, tuple(samples), t.stage_history, t.aborted
            )
        attached.append(t)
    dataset = Dataset(files, attached, read_alerts(paths["alerts"]), read_ambient(paths["ambient"]))
    if validate:
        report = dataset.validate()
        known = {t.key for t in trials}
        for key in sorted(series):
            if key not in known:
                report.add("dangling-reference", f"{key[0]}/{key[1]}", "resource samples for a trial not in trials.csv")
        if not report.ok:
            raise ValidationError(report)
    return dataset


def dumps_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()
