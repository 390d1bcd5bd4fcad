from __future__ import annotations

import pytest

from detector_eval.remediation import (
    AbortExperiment,
    Action,
    BackendError,
    RemediationPolicy,
    RemediationState,
    StageException,
    apply_remediation,
    guarded,
)

ERR = StageException("boom")


def test_ladder_escalates_through_budgets():
    state = RemediationState(RemediationPolicy(stage_retry_budget={"s": 2}, trial_restart_budget=1))
    actions = [apply_remediation(state, "s", ERR) for _ in range(9)]
    assert actions[0] is Action.IGNORE_CONTINUE
    assert actions[:3] == [Action.IGNORE_CONTINUE] * 3
    # fourth exception in the stage, stage retry budget 2 -> RestartStage
    assert actions[3] is Action.RESTART_STAGE
    assert actions[4] is Action.RESTART_STAGE
    assert actions[5] is Action.RESTART_TRIAL
    # trial restart resets the per-stage counters
    assert actions[6:9] == [Action.IGNORE_CONTINUE] * 3


def test_exhaustion_hits_terminal():
    policy = RemediationPolicy(ignore_budget=0, stage_retry_budget={"s": 0}, trial_restart_budget=0)
    state = RemediationState(policy)
    assert apply_remediation(state, "s", ERR) is Action.ABORT_TRIAL
    policy = RemediationPolicy(
        ignore_budget=0, ladder=(Action.IGNORE_CONTINUE,), terminal=Action.ABORT_EXPERIMENT
    )
    assert apply_remediation(RemediationState(policy), "s", ERR) is Action.ABORT_EXPERIMENT


def test_stage_completion_resets_counters():
    state = RemediationState(RemediationPolicy(ignore_budget=1))
    assert apply_remediation(state, "s", ERR) is Action.IGNORE_CONTINUE
    assert apply_remediation(state, "s", ERR) is Action.RESTART_STAGE
    state.stage_completed()
    assert apply_remediation(state, "t", ERR) is Action.IGNORE_CONTINUE


def test_policy_validation():
    with pytest.raises(ValueError):
        RemediationPolicy(stage_retry_budget={"s": 3})
    with pytest.raises(ValueError):
        RemediationPolicy(ladder=())
    with pytest.raises(ValueError):
        RemediationPolicy(terminal=Action.SKIP_STAGE)
    with pytest.raises(ValueError):
        RemediationPolicy(ignore_budget=-1)
    assert RemediationPolicy(ladder=("SkipStage",)).ladder == (Action.SKIP_STAGE,)


def test_guarded_wraps_unexpected_errors():
    @guarded
    def bad():
        raise KeyError("x")

    @guarded
    def stage_err():
        raise ERR

    @guarded
    def fatal():
        raise AbortExperiment("stop")

    with pytest.raises(BackendError):
        bad()
    with pytest.raises(StageException) as info:
        stage_err()
    assert info.value is ERR
    with pytest.raises(AbortExperiment):
        fatal()
