"""Append-only metrics event log and its aggregate summary."""

from __future__ import annotations

import json
import math
import threading
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Any, Iterable, Mapping, Optional, Union

import numpy as np


class EventKind(str, Enum):
    STAGE_START = "stage-start"
    STAGE_DONE = "stage-done"
    EXCEPTION = "exception"
    REMEDIATION = "remediation"
    PERMIT_GRANT = "permit-grant"
    PERMIT_RELEASE = "permit-release"
    TRIAL_DONE = "trial-done"


class MalformedEvent(ValueError):
    pass


@dataclass(frozen=True)
class MetricsEvent:
    t: float
    worker_id: int
    seq: int
    kind: EventKind
    payload: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "worker_id": self.worker_id,
            "seq": self.seq,
            "kind": self.kind.value,
            "payload": dict(self.payload),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "MetricsEvent":
        try:
            t = float(raw["t"])
            worker_id = int(raw["worker_id"])
            seq = int(raw["seq"])
            kind = EventKind(raw["kind"])
            payload = raw.get("payload", {})
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedEvent(f"bad metrics event {raw!r}: {exc}") from exc
        if not isinstance(payload, Mapping) or not math.isfinite(t):
            raise MalformedEvent(f"bad metrics event {raw!r}")
        return cls(t, worker_id, seq, kind, payload)


class MetricsSink:
    """Thread-safe append-only sink; assigns a global sequence number."""

    def __init__(self, stream: Optional[IO[str]] = None, keep: bool = True):
        self.events: list[MetricsEvent] = []
        self.stream = stream
        self.keep = keep
        self._seq = 0
        self._lock = threading.Lock()

    def emit(self, t: float, worker_id: int, kind: EventKind, **payload) -> MetricsEvent:
        with self._lock:
            event = MetricsEvent(t, worker_id, self._seq, EventKind(kind), payload)
            self._seq += 1
            if self.keep:
                self.events.append(event)
            if self.stream is not None:
                self.stream.write(event.to_json() + "\n")
            return event

    def __len__(self) -> int:
        return self._seq


def read_events(path: Union[str, Path]) -> list[dict]:
    """Read a JSON Lines metrics log into raw dicts (validation happens in aggregation)."""
    rows: list[Any] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError:
                rows.append(line)
    return rows


@dataclass
class StageLatency:
    count: int = 0
    p50: float = 0.0
    p90: float = 0.0
    p99: float = 0.0
    mean: float = 0.0


@dataclass
class MetricsSummary:
    events: int = 0
    malformed: int = 0
    trials_completed: int = 0
    trials_aborted: int = 0
    files_per_minute: float = 0.0
    peak_files_per_minute: float = 0.0
    overall_files_per_minute: float = 0.0
    stage_latency: dict[str, StageLatency] = field(default_factory=dict)
    exceptions: dict[str, int] = field(default_factory=dict)
    remediations: dict[str, int] = field(default_factory=dict)
    max_concurrency: dict[str, int] = field(default_factory=dict)
    limit_violations: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["stage_latency"] = {k: dict(v.__dict__) for k, v in sorted(self.stage_latency.items())}
        return out


def _coerce(raw) -> MetricsEvent:
    if isinstance(raw, MetricsEvent):
        return raw
    if isinstance(raw, str):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedEvent(str(exc)) from exc
    if not isinstance(raw, Mapping):
        raise MalformedEvent(f"not an event: {raw!r}")
    return MetricsEvent.from_dict(raw)


def aggregate_metrics(
    stream: Iterable[Any], limits: Optional[Mapping[str, int]] = None, window_s: float = 60.0
) -> MetricsSummary:
    summary = MetricsSummary()
    events: list[MetricsEvent] = []
    for raw in stream:
        try:
            ev = _coerce(raw)
            if ev.kind in (EventKind.PERMIT_GRANT, EventKind.PERMIT_RELEASE):
                str(ev.payload["class"]), int(ev.payload["n"])
        except (MalformedEvent, KeyError, TypeError, ValueError):
            summary.malformed += 1
            continue
        events.append(ev)
    events.sort(key=lambda e: e.seq)
    summary.events = len(events)
    if not events:
        return summary

    done_times = []
    starts: dict[tuple, float] = {}
    latencies: dict[str, list[float]] = defaultdict(list)
    exceptions: Counter = Counter()
    remediations: Counter = Counter()
    held: dict[str, int] = defaultdict(int)
    peak: dict[str, int] = defaultdict(int)
    violations: dict[str, int] = defaultdict(int)

    for ev in events:
        p = ev.payload
        if ev.kind is EventKind.TRIAL_DONE:
            if p.get("status", "completed") == "aborted":
                summary.trials_aborted += 1
            else:
                summary.trials_completed += 1
                done_times.append(ev.t)
        elif ev.kind is EventKind.STAGE_START:
            starts[(ev.worker_id, p.get("trial"), p.get("stage"))] = ev.t
        elif ev.kind is EventKind.STAGE_DONE:
            begun = starts.pop((ev.worker_id, p.get("trial"), p.get("stage")), None)
            if begun is not None:
                latencies[str(p.get("stage"))].append(ev.t - begun)
        elif ev.kind is EventKind.EXCEPTION:
            exceptions[str(p.get("type", "Exception"))] += 1
        elif ev.kind is EventKind.REMEDIATION:
            remediations[str(p.get("action"))] += 1
        elif ev.kind is EventKind.PERMIT_GRANT:
            cls = p["class"]
            held[cls] += int(p["n"])
            peak[cls] = max(peak[cls], held[cls])
            if limits is not None and cls in limits and held[cls] > limits[cls]:
                violations[cls] += 1
        elif ev.kind is EventKind.PERMIT_RELEASE:
            held[p["class"]] -= int(p["n"])

    if done_times:
        times = np.sort(np.asarray(done_times))
        last = times[-1]
        summary.files_per_minute = float(np.sum(times > last - window_s)) * 60.0 / window_s
        # peak over windows (t - window, t] ending at each completion
        lo = np.searchsorted(times, times - window_s, side="right")
        counts = np.arange(1, len(times) + 1) - lo
        summary.peak_files_per_minute = float(counts.max()) * 60.0 / window_s
        span = last - events[0].t
        if span > 0:
            summary.overall_files_per_minute = len(times) * 60.0 / span

    for stage, values in sorted(latencies.items()):
        arr = np.asarray(values)
        summary.stage_latency[stage] = StageLatency(
            count=len(values),
            p50=float(np.percentile(arr, 50)),
            p90=float(np.percentile(arr, 90)),
            p99=float(np.percentile(arr, 99)),
            mean=float(arr.mean()),
        )
    summary.exceptions = dict(sorted(exceptions.items()))
    summary.remediations = dict(sorted(remediations.items()))
    summary.max_concurrency = dict(sorted(peak.items()))
    if limits is not None:
        summary.limit_violations = {cls: violations.get(cls, 0) for cls in sorted(limits)}
    return summary
