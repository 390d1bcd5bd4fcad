"""Exception remediation ladder for trial stages."""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping


class StageException(Exception):
    """Raised by a stage's start or check; routed to the remediation ladder."""


class BackendError(StageException):
    """An unexpected error from the backend, wrapped so it can be remediated."""


class AbortExperiment(RuntimeError):
    pass


class Action(str, Enum):
    IGNORE_CONTINUE = "IgnoreContinue"
    RESTART_STAGE = "RestartStage"
    SKIP_STAGE = "SkipStage"
    RESTART_TRIAL = "RestartTrial"
    ABORT_TRIAL = "AbortTrialNoResults"
    RESTART_ORCHESTRATOR = "RestartOrchestrator"
    ABORT_EXPERIMENT = "AbortExperiment"


TERMINAL = frozenset({Action.ABORT_TRIAL, Action.ABORT_EXPERIMENT})

DEFAULT_STAGE_RETRIES = {
    "restore_snapshot": 2,
    "upload_script": 2,
    "deliver_file": 1,
    "static_wait": 0,
    "execute": 0,
    "collect": 2,
}


@dataclass(frozen=True)
class RemediationPolicy:
    ignore_budget: int = 3
    stage_retry_budget: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_STAGE_RETRIES))
    default_stage_retries: int = 2
    trial_restart_budget: int = 3
    skip_budget: int = 1
    orchestrator_restart_budget: int = 1
    ladder: tuple[Action, ...] = (
        Action.IGNORE_CONTINUE,
        Action.RESTART_STAGE,
        Action.RESTART_TRIAL,
        Action.ABORT_TRIAL,
    )
    terminal: Action = Action.ABORT_TRIAL

    def __post_init__(self):
        object.__setattr__(self, "ladder", tuple(Action(a) for a in self.ladder))
        object.__setattr__(self, "terminal", Action(self.terminal))
        if not self.ladder:
            raise ValueError("remediation ladder must not be empty")
        if self.terminal not in TERMINAL:
            raise ValueError(f"terminal action must be one of {sorted(a.value for a in TERMINAL)}")
        budgets = (
            self.ignore_budget,
            self.default_stage_retries,
            self.trial_restart_budget,
            self.skip_budget,
            self.orchestrator_restart_budget,
        )
        if min(budgets) < 0:
            raise ValueError("remediation budgets must be nonnegative")
        for stage, n in {**self.stage_retry_budget, "<default>": self.default_stage_retries}.items():
            if not 0 <= n <= 2:
                raise ValueError(f"stage retry budget for {stage} must lie in [0, 2], got {n}")

    def stage_retries(self, stage: str) -> int:
        return self.stage_retry_budget.get(stage, self.default_stage_retries)


@dataclass
class WorkerBudget:
    """Remediation counters scoped to one orchestrator worker."""

    orchestrator_restarts: int = 0


@dataclass
class RemediationState:
    """Budget consumption for one trial; stage counters reset when a stage completes."""

    policy: RemediationPolicy
    worker: WorkerBudget = field(default_factory=WorkerBudget)
    ignores: int = 0
    stage_retries: int = 0
    skips: int = 0
    trial_restarts: int = 0

    def _available(self, action: Action, stage: str) -> bool:
        p = self.policy
        if action is Action.IGNORE_CONTINUE:
            return self.ignores < p.ignore_budget
        if action is Action.RESTART_STAGE:
            return self.stage_retries < p.stage_retries(stage)
        if action is Action.SKIP_STAGE:
            return self.skips < p.skip_budget
        if action is Action.RESTART_TRIAL:
            return self.trial_restarts < p.trial_restart_budget
        if action is Action.RESTART_ORCHESTRATOR:
            return self.worker.orchestrator_restarts < p.orchestrator_restart_budget
        return True

    def _consume(self, action: Action) -> None:
        if action is Action.IGNORE_CONTINUE:
            self.ignores += 1
        elif action is Action.RESTART_STAGE:
            self.stage_retries += 1
        elif action is Action.SKIP_STAGE:
            self.skips += 1
        elif action is Action.RESTART_TRIAL:
            self.trial_restarts += 1
            self.stage_completed()
        elif action is Action.RESTART_ORCHESTRATOR:
            self.worker.orchestrator_restarts += 1

    def stage_completed(self) -> None:
        self.ignores = self.stage_retries = self.skips = 0

    def apply(self, stage: str, exc: BaseException) -> Action:
        for action in self.policy.ladder:
            if self._available(action, stage):
                self._consume(action)
                return action
        return self.policy.terminal


def apply_remediation(state: RemediationState, stage: str, exc: BaseException) -> Action:
    """Pick the next unexhausted action on the ladder and charge its budget."""
    return state.apply(stage, exc)


def guarded(method):
    """Wrap unexpected backend errors from a stage entry point in :class:`BackendError`."""

    @functools.wraps(method)
    def wrapper(*args, **kwargs):
        try:
            return method(*args, **kwargs)
        except StageException:
            raise
        except (AbortExperiment, KeyboardInterrupt):
            raise
        except Exception as exc:
            raise BackendError(f"{type(exc).__name__}: {exc}") from exc

    return wrapper
