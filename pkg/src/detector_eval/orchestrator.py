"""Experiment orchestration: workers multiplexing many trials through ordered stages.

Each worker owns a fixed number of trial slots and polls them in a
cooperative loop, starting the next stage of any trial whose current stage
has finished and handing a finished slot the next trial spec. Stage
exceptions go through the remediation ladder. By default the whole engine
runs on one thread over virtual time, which makes runs reproducible; a
wall-clock mode runs one thread per worker for real backends.
"""

from __future__ import annotations

import json
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional, Protocol, Sequence

from .metrics import EventKind, MetricsSink
from .model import AlertEvent, StageEntry, TrialRecord
from .remediation import (
    AbortExperiment,
    Action,
    RemediationPolicy,
    RemediationState,
    StageException,
    WorkerBudget,
    apply_remediation,
    guarded,
)
from .sandbox import STAGES
from .warden import ResourceContainer, Warden


class ConfigError(ValueError):
    pass


class Backend(Protocol):
    def new_state(self, tool_id: str, file_id: str, trial_attempt: int) -> Any: ...

    def start_stage(self, stage: str, state: Any, now: float) -> Optional[float]: ...

    def check_stage(self, stage: str, state: Any, now: float) -> bool: ...

    def next_wake(self, state: Any) -> Optional[float]: ...

    def reset_stage(self, stage: str, state: Any) -> None: ...

    def skip_stage(self, stage: str, state: Any) -> None: ...

    def discard(self, state: Any) -> None: ...

    def results(self, state: Any, stage_history: Sequence[StageEntry]) -> tuple: ...


@dataclass(frozen=True)
class Stage:
    """Stateless stage: knows how to start and check one step on the backend."""

    name: str
    demands: tuple[tuple[str, int], ...] = ()

    @guarded
    def start(self, backend: Backend, state: Any, now: float) -> Optional[float]:
        return backend.start_stage(self.name, state, now)

    @guarded
    def check(self, backend: Backend, state: Any, now: float) -> bool:
        return backend.check_stage(self.name, state, now)


DEFAULT_DEMANDS: dict[str, tuple[tuple[str, int], ...]] = {
    "restore_snapshot": (("snapshot-restore", 1),),
    "upload_script": (("script-upload", 1),),
    "collect": (("power-op", 1),),
}
DEFAULT_LIMITS = {"snapshot-restore": 4, "script-upload": 8, "power-op": 8}


def default_stages(demands: Mapping[str, Sequence[tuple[str, int]]] = DEFAULT_DEMANDS) -> tuple[Stage, ...]:
    return tuple(
        Stage(name, tuple(sorted((str(c), int(n)) for c, n in demands.get(name, ())))) for name in STAGES
    )


@dataclass(frozen=True)
class TrialSpec:
    tool_id: str
    file_id: str
    params: Mapping[str, Any] = field(default_factory=dict)

    @property
    def key(self) -> tuple[str, str]:
        return (self.tool_id, self.file_id)


@dataclass(frozen=True)
class ExperimentPlan:
    trial_specs: tuple[TrialSpec, ...]
    worker_count: int = 10
    trials_per_worker: int = 20
    master_seed: int = 0
    remediation: RemediationPolicy = field(default_factory=RemediationPolicy)
    stages: tuple[Stage, ...] = field(default_factory=default_stages)
    retry_delay_s: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "trial_specs", tuple(self.trial_specs))
        if self.worker_count < 1 or self.trials_per_worker < 1:
            raise ConfigError("worker_count and trials_per_worker must be positive")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        if not self.stages:
            raise ConfigError("a trial needs at least one stage")
        if self.retry_delay_s < 0:
            raise ConfigError("retry_delay_s must be nonnegative")
        seen = set()
        for spec in self.trial_specs:
            if spec.key in seen:
                raise ConfigError(f"trial spec {spec.key} listed twice")
            seen.add(spec.key)


@dataclass
class TrialResults:
    spec_index: int
    spec: TrialSpec
    status: str  # "completed" or "aborted"
    record: Optional[TrialRecord] = None
    alerts: tuple[AlertEvent, ...] = ()
    logs: Mapping[str, Any] = field(default_factory=dict)
    stage_history: tuple[StageEntry, ...] = ()
    trial_attempts: int = 1
    remediations: tuple[str, ...] = ()

    @property
    def aborted(self) -> bool:
        return self.status == "aborted"

    def to_dict(self) -> dict:
        rec = self.record
        return {
            "index": self.spec_index,
            "tool_id": self.spec.tool_id,
            "file_id": self.spec.file_id,
            "status": self.status,
            "times": None if rec is None else [rec.t_download, rec.t_execute, rec.t_close],
            "samples": 0 if rec is None else len(rec.resource_series),
            "alerts": [a.t_alert for a in self.alerts],
            "stages": [[s.stage, s.attempts, s.disposition] for s in self.stage_history],
            "trial_attempts": self.trial_attempts,
            "remediations": list(self.remediations),
        }


@dataclass
class ExperimentResults:
    results: list[TrialResults]
    events: list = field(default_factory=list)
    end_time: float = 0.0

    @property
    def completed(self) -> list[TrialResults]:
        return [r for r in self.results if not r.aborted]

    @property
    def aborted(self) -> list[TrialResults]:
        return [r for r in self.results if r.aborted]

    def serialize(self) -> bytes:
        return json.dumps([r.to_dict() for r in self.results], sort_keys=True).encode()


class StatusKind(str, Enum):
    UNCHANGED = "Unchanged"
    WAITING = "Waiting"
    STARTED = "Started"
    ADVANCED = "Advanced"
    RETRYING = "Retrying"
    COMPLETED = "Completed"
    ABORTED = "Aborted"


@dataclass(frozen=True)
class TrialStatus:
    kind: StatusKind
    stage: Optional[str] = None

    @property
    def progressed(self) -> bool:
        return self.kind not in (StatusKind.UNCHANGED, StatusKind.WAITING)


class Trial:
    """Mutable per-slot trial state; the stages themselves stay stateless."""

    def __init__(self, worker: "Worker", index: int, spec: TrialSpec):
        self.worker = worker
        self.spec_index = index
        self.spec = spec
        self.container = ResourceContainer(
            worker.warden, owner=f"{spec.tool_id}/{spec.file_id}", worker_id=worker.worker_id
        )
        self.remediation = RemediationState(worker.plan.remediation, worker.budget)
        self.trial_attempt = 0
        self.remediation_log: list[str] = []
        self.result: Optional[TrialResults] = None
        self._fresh_state()

    def _fresh_state(self) -> None:
        self.state = self.worker.backend.new_state(self.spec.tool_id, self.spec.file_id, self.trial_attempt)
        self.stage_idx = 0
        self.step = "acquire"
        self.demand_idx = 0
        self.pending = None
        self.wake_at: Optional[float] = None
        self.attempts: dict[str, int] = {}
        self.history: list[StageEntry] = []

    @property
    def name(self) -> str:
        return self.container.owner

    @property
    def stage(self) -> Stage:
        return self.worker.plan.stages[self.stage_idx]

    @property
    def done(self) -> bool:
        return self.result is not None

    def due(self, now: float) -> bool:
        if self.done:
            return False
        if self.step == "acquire":
            return self.pending is None or self.pending.granted
        return self.wake_at is None or self.wake_at <= now

    def restart(self, now: float) -> None:
        """Throw away all progress and start this spec again from the first stage."""
        self.container.release_all()
        self.worker.backend.discard(self.state)
        self.trial_attempt += 1
        self._fresh_state()
        self.wake_at = now + self.worker.plan.retry_delay_s


def poll_trial(trial: Trial, now: float) -> TrialStatus:
    """Give one in-flight trial a chance to make progress."""
    worker = trial.worker
    if trial.done:
        return TrialStatus(StatusKind.UNCHANGED)
    stage = trial.stage

    if trial.step == "acquire":
        while trial.demand_idx < len(stage.demands):
            cls, n = stage.demands[trial.demand_idx]
            if trial.pending is None:
                trial.pending = trial.container.request(cls, n)
            if not trial.pending.granted:
                return TrialStatus(StatusKind.WAITING, stage.name)
            trial.pending = None
            trial.demand_idx += 1
        trial.step = "start"

    if trial.step == "start":
        if trial.wake_at is not None and now < trial.wake_at:
            return TrialStatus(StatusKind.UNCHANGED, stage.name)
        trial.attempts[stage.name] = trial.attempts.get(stage.name, 0) + 1
        worker.emit(now, EventKind.STAGE_START, trial=trial.name, stage=stage.name,
                    attempt=trial.attempts[stage.name])
        try:
            trial.wake_at = stage.start(worker.backend, trial.state, now)
        except StageException as exc:
            return _remediate(trial, exc, now)
        trial.step = "check"
        return TrialStatus(StatusKind.STARTED, stage.name)

    if trial.wake_at is not None and now < trial.wake_at:
        return TrialStatus(StatusKind.UNCHANGED, stage.name)
    try:
        finished = stage.check(worker.backend, trial.state, now)
    except StageException as exc:
        return _remediate(trial, exc, now)
    if not finished:
        trial.wake_at = worker.backend.next_wake(trial.state)
        return TrialStatus(StatusKind.UNCHANGED, stage.name)

    trial.container.release_all()
    worker.emit(now, EventKind.STAGE_DONE, trial=trial.name, stage=stage.name)
    trial.history.append(StageEntry(stage.name, trial.attempts.get(stage.name, 1), "Completed"))
    trial.remediation.stage_completed()
    return _advance(trial, now)


def _advance(trial: Trial, now: float) -> TrialStatus:
    trial.stage_idx += 1
    if trial.stage_idx >= len(trial.worker.plan.stages):
        _finish(trial, now, "completed")
        return TrialStatus(StatusKind.COMPLETED)
    trial.step = "acquire"
    trial.demand_idx = 0
    trial.pending = None
    trial.wake_at = None
    name = trial.stage.name
    poll_trial(trial, now)
    return TrialStatus(StatusKind.ADVANCED, name)


def _finish(trial: Trial, now: float, status: str) -> None:
    worker = trial.worker
    trial.container.release_all()
    record, alerts, logs = None, (), {}
    if status == "completed":
        record, alerts, logs = worker.backend.results(trial.state, tuple(trial.history))
    else:
        worker.backend.discard(trial.state)
    trial.result = TrialResults(
        spec_index=trial.spec_index,
        spec=trial.spec,
        status=status,
        record=record,
        alerts=tuple(alerts),
        logs=logs,
        stage_history=tuple(trial.history),
        trial_attempts=trial.trial_attempt + 1,
        remediations=tuple(trial.remediation_log),
    )
    worker.emit(now, EventKind.TRIAL_DONE, trial=trial.name, status=status)


def _remediate(trial: Trial, exc: StageException, now: float) -> TrialStatus:
    worker = trial.worker
    stage = trial.stage
    worker.emit(now, EventKind.EXCEPTION, trial=trial.name, stage=stage.name,
                type=type(exc).__name__, message=str(exc))
    action = apply_remediation(trial.remediation, stage.name, exc)
    worker.emit(now, EventKind.REMEDIATION, trial=trial.name, stage=stage.name, action=action.value)
    trial.remediation_log.append(f"{stage.name}:{action.value}")
    delay = worker.plan.retry_delay_s

    if action is Action.IGNORE_CONTINUE:
        trial.wake_at = now + delay
        return TrialStatus(StatusKind.RETRYING, stage.name)
    if action is Action.RESTART_STAGE:
        trial.container.release_all()
        worker.backend.reset_stage(stage.name, trial.state)
        trial.step, trial.demand_idx, trial.pending = "acquire", 0, None
        trial.wake_at = now + delay
        return TrialStatus(StatusKind.RETRYING, stage.name)
    if action is Action.SKIP_STAGE:
        trial.container.release_all()
        worker.backend.skip_stage(stage.name, trial.state)
        trial.history.append(StageEntry(stage.name, trial.attempts.get(stage.name, 1), "Skipped"))
        trial.remediation.stage_completed()
        return _advance(trial, now)
    if action is Action.RESTART_TRIAL:
        trial.restart(now)
        return TrialStatus(StatusKind.RETRYING, trial.stage.name)
    if action is Action.RESTART_ORCHESTRATOR:
        worker.restart(now)
        return TrialStatus(StatusKind.RETRYING, trial.stage.name)
    if action is Action.ABORT_TRIAL:
        _finish(trial, now, "aborted")
        return TrialStatus(StatusKind.ABORTED)
    trial.container.release_all()
    raise AbortExperiment(f"{trial.name}: remediation exhausted in {stage.name}: {exc}")


class Worker:
    """One cooperative loop multiplexing up to ``trials_per_worker`` trials."""

    def __init__(
        self,
        worker_id: int,
        specs: Sequence[tuple[int, TrialSpec]],
        plan: ExperimentPlan,
        backend: Backend,
        warden: Warden,
        sink: MetricsSink,
    ):
        self.worker_id = worker_id
        self.plan = plan
        self.backend = backend
        self.warden = warden
        self.sink = sink
        self.budget = WorkerBudget()
        self.queue: deque[tuple[int, TrialSpec]] = deque(specs)
        self.slots: list[Optional[Trial]] = [None] * plan.trials_per_worker
        self.results: list[TrialResults] = []

    def emit(self, now: float, kind: EventKind, **payload) -> None:
        self.sink.emit(now, self.worker_id, kind, **payload)

    @property
    def active(self) -> bool:
        return bool(self.queue) or any(t is not None for t in self.slots)

    def _load(self, slot: int, now: float) -> Optional[Trial]:
        if not self.queue:
            self.slots[slot] = None
            return None
        index, spec = self.queue.popleft()
        trial = Trial(self, index, spec)
        self.slots[slot] = trial
        return trial

    def sweep(self, now: float) -> bool:
        """Poll every due trial once; returns whether anything changed."""
        progressed = False
        for slot in range(len(self.slots)):
            trial = self.slots[slot]
            if trial is None:
                if not self.queue:
                    continue
                trial = self._load(slot, now)
                progressed = True
            if not trial.due(now):
                continue
            status = poll_trial(trial, now)
            progressed |= status.progressed
            # a restart may have replaced this slot's trial object
            trial = self.slots[slot]
            if trial is not None and trial.done:
                self.results.append(trial.result)
                self._load(slot, now)
                progressed = True
        return progressed

    def restart(self, now: float) -> None:
        """Requeue every in-flight spec of this worker on fresh trial state."""
        for trial in self.slots:
            if trial is not None and not trial.done:
                trial.restart(now)
                trial.remediation = RemediationState(self.plan.remediation, self.budget)

    def next_wake(self, now: float) -> Optional[float]:
        times = [
            t.wake_at
            for t in self.slots
            if t is not None and not t.done and t.wake_at is not None and t.wake_at > now
        ]
        return min(times) if times else None


class Orchestrator:
    def __init__(
        self,
        plan: ExperimentPlan,
        backend: Backend,
        warden: Warden,
        sink: Optional[MetricsSink] = None,
        clock: str = "virtual",
        poll_interval_s: float = 0.01,
    ):
        if clock not in ("virtual", "wall"):
            raise ConfigError(f"clock must be 'virtual' or 'wall', got {clock!r}")
        for stage in plan.stages:
            for cls, n in stage.demands:
                if cls not in warden.classes:
                    raise ConfigError(f"stage {stage.name} needs unregistered resource class {cls!r}")
                if n > warden.limit(cls):
                    raise ConfigError(f"stage {stage.name} needs {n} {cls!r} permits, limit is {warden.limit(cls)}")
        self.plan = plan
        self.backend = backend
        self.warden = warden
        self.sink = sink if sink is not None else MetricsSink()
        self.clock = clock
        self.poll_interval_s = poll_interval_s
        self.now = 0.0
        self._t0 = 0.0
        partitions: list[list[tuple[int, TrialSpec]]] = [[] for _ in range(plan.worker_count)]
        for i, spec in enumerate(plan.trial_specs):
            partitions[i % plan.worker_count].append((i, spec))
        self.workers = [
            Worker(w, partitions[w], plan, backend, warden, self.sink) for w in range(plan.worker_count)
        ]
        self._previous_listener = warden.listener
        warden.listener = self._on_permit

    def _time(self) -> float:
        if self.clock == "wall":
            return time.monotonic() - self._t0
        return self.now

    def _on_permit(self, kind: str, class_name: str, n: int, container: ResourceContainer, held: int) -> None:
        self.sink.emit(self._time(), container.worker_id, EventKind(kind), **{
            "class": class_name, "n": n, "trial": container.owner, "held": held,
        })
        if self._previous_listener is not None:
            self._previous_listener(kind, class_name, n, container, held)

    def run(self) -> ExperimentResults:
        try:
            if self.clock == "virtual":
                self._run_virtual()
            else:
                self._run_wall()
        finally:
            self.warden.listener = self._previous_listener
        results = sorted((r for w in self.workers for r in w.results), key=lambda r: r.spec_index)
        if len(results) != len(self.plan.trial_specs):
            raise RuntimeError(f"{len(results)} results for {len(self.plan.trial_specs)} specs")
        return ExperimentResults(results, list(self.sink.events), self._time())

    def _run_virtual(self) -> None:
        while True:
            progressed = True
            while progressed:
                progressed = False
                for worker in self.workers:
                    progressed |= worker.sweep(self.now)
            if not any(w.active for w in self.workers):
                return
            wakes = [t for t in (w.next_wake(self.now) for w in self.workers) if t is not None]
            if not wakes:
                raise RuntimeError(f"stalled at t={self.now}: trials waiting with nothing scheduled")
            self.now = min(wakes)

    def _run_wall(self) -> None:
        self._t0 = time.monotonic()
        errors: list[BaseException] = []

        def loop(worker: Worker) -> None:
            try:
                while worker.active:
                    if not worker.sweep(self._time()):
                        time.sleep(self.poll_interval_s)
            except BaseException as exc:  # surfaced on the main thread
                errors.append(exc)

        threads = [threading.Thread(target=loop, args=(w,), name=f"worker-{w.worker_id}") for w in self.workers]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]


def run_experiment(
    plan: ExperimentPlan,
    backend: Backend,
    warden: Warden,
    sink: Optional[MetricsSink] = None,
    clock: str = "virtual",
    poll_interval_s: float = 0.01,
) -> ExperimentResults:
    """Run every trial spec to completion or abort and collect one result per spec."""
    return Orchestrator(plan, backend, warden, sink, clock, poll_interval_s).run()


def plan_for(
    tools: Sequence[str],
    file_ids: Sequence[str],
    **kwargs,
) -> ExperimentPlan:
    """Plan testing every tool against every file, tool-major order."""
    specs = tuple(TrialSpec(tool, fid) for tool in tools for fid in file_ids)
    return ExperimentPlan(specs, **kwargs)

