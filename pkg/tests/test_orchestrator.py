from __future__ import annotations

import pytest

from detector_eval.metrics import EventKind, MetricsSink
from detector_eval.orchestrator import (
    DEFAULT_LIMITS,
    ConfigError,
    ExperimentPlan,
    Stage,
    StatusKind,
    Trial,
    TrialSpec,
    Worker,
    plan_for,
    poll_trial,
    run_experiment,
)
from detector_eval.remediation import AbortExperiment, Action, RemediationPolicy, StageException
from detector_eval.sandbox import STAGES, FaultConfig, SimBackend, preset, synth_corpus
from detector_eval.warden import ResourceContainer, Warden


def sim(n_files=4, tools=("ml",), faults=FaultConfig(), seed=3):
    files = synth_corpus(n_files, seed)
    backend = SimBackend(files, {t: preset(t) for t in tools}, faults=faults, master_seed=seed)
    return files, backend


def test_single_spec_completes_all_stages():
    files, backend = sim(1)
    plan = plan_for(["ml"], [files[0].file_id], worker_count=1, trials_per_worker=1)
    res = run_experiment(plan, backend, Warden(DEFAULT_LIMITS))
    [r] = res.results
    assert r.status == "completed"
    assert [s.stage for s in r.stage_history] == list(STAGES)
    assert all(s.attempts == 1 and s.disposition == "Completed" for s in r.stage_history)
    rec = r.record
    assert rec.t_download == 0.0 and rec.t_download < rec.t_execute < rec.t_close
    assert rec.t_close - rec.t_execute == pytest.approx(60.0)


def test_one_result_per_spec_in_spec_order():
    files, backend = sim(30, tools=("ml", "signature"))
    plan = plan_for(["ml", "signature"], [f.file_id for f in files], worker_count=3, trials_per_worker=4)
    res = run_experiment(plan, backend, Warden(DEFAULT_LIMITS))
    assert [r.spec_index for r in res.results] == list(range(60))
    assert [r.spec.key for r in res.results] == [s.key for s in plan.trial_specs]


def test_runs_are_deterministic():
    def once():
        files, backend = sim(20, tools=("ml", "signature"), faults=FaultConfig(transient=0.05))
        plan = plan_for(["ml", "signature"], [f.file_id for f in files], worker_count=2, trials_per_worker=5)
        sink = MetricsSink()
        return run_experiment(plan, backend, Warden(DEFAULT_LIMITS), sink).serialize(), [
            e.to_json() for e in sink.events
        ]

    assert once() == once()


def test_permit_limit_respected_and_events_emitted():
    files, backend = sim(40)
    plan = plan_for(["ml"], [f.file_id for f in files], worker_count=4, trials_per_worker=10)
    sink = MetricsSink()
    run_experiment(plan, backend, Warden({**DEFAULT_LIMITS, "snapshot-restore": 2}), sink)
    held = 0
    peak = 0
    for e in sink.events:
        if e.payload.get("class") == "snapshot-restore":
            held += e.payload["n"] if e.kind is EventKind.PERMIT_GRANT else -e.payload["n"]
            peak = max(peak, held)
    assert peak == 2
    kinds = {e.kind for e in sink.events}
    assert {EventKind.STAGE_START, EventKind.STAGE_DONE, EventKind.TRIAL_DONE} <= kinds


def test_poll_status_sequence():
    files, backend = sim(1)
    plan = plan_for(["ml"], [files[0].file_id], worker_count=1, trials_per_worker=1)
    worker = Worker(0, [], plan, backend, Warden(DEFAULT_LIMITS), MetricsSink())
    trial = Trial(worker, 0, plan.trial_specs[0])
    assert poll_trial(trial, 0.0).kind is StatusKind.STARTED
    assert poll_trial(trial, 0.0).kind is StatusKind.UNCHANGED
    status = poll_trial(trial, trial.wake_at)
    assert status.kind is StatusKind.ADVANCED and status.stage == "upload_script"
    now = trial.wake_at
    for _ in range(50):
        status = poll_trial(trial, now)
        if status.kind is StatusKind.COMPLETED:
            break
        now = trial.wake_at if trial.wake_at is not None else now
    assert status.kind is StatusKind.COMPLETED
    assert poll_trial(trial, now).kind is StatusKind.UNCHANGED


def test_waiting_on_permit():
    files, backend = sim(1)
    plan = plan_for(["ml"], [files[0].file_id], worker_count=1, trials_per_worker=1)
    warden = Warden({**DEFAULT_LIMITS, "snapshot-restore": 1})
    blocker = ResourceContainer(warden, "blocker")
    blocker.request("snapshot-restore")
    worker = Worker(0, [], plan, backend, warden, MetricsSink())
    trial = Trial(worker, 0, plan.trial_specs[0])
    assert poll_trial(trial, 0.0).kind is StatusKind.WAITING
    assert not trial.due(0.0)
    blocker.release_all()
    assert trial.due(0.0)
    assert poll_trial(trial, 0.0).kind is StatusKind.STARTED


class ScriptedBackend(SimBackend):
    """Raises on chosen (stage, call number) pairs."""

    def __init__(self, *args, fail=None, **kwargs):
        super().__init__(*args, **kwargs)
        self.fail = fail or {}
        self.calls: dict[str, int] = {}

    def start_stage(self, stage, vm, now):
        self.calls[stage] = self.calls.get(stage, 0) + 1
        if self.calls[stage] in self.fail.get(stage, ()):
            raise StageException(f"scripted failure {stage}#{self.calls[stage]}")
        return super().start_stage(stage, vm, now)


def _scripted(fail, policy=RemediationPolicy()):
    files = synth_corpus(1, 1)
    backend = ScriptedBackend(files, {"ml": preset("ml")}, fail=fail)
    plan = plan_for(["ml"], [files[0].file_id], worker_count=1, trials_per_worker=1, remediation=policy)
    return run_experiment(plan, backend, Warden(DEFAULT_LIMITS)), backend


def test_ignore_then_restart_stage_counts_attempts():
    res, _ = _scripted({"upload_script": {1, 2, 3, 4}})
    [r] = res.results
    assert r.status == "completed"
    assert r.remediations == ("upload_script:IgnoreContinue",) * 3 + ("upload_script:RestartStage",)
    assert dict((s.stage, s.attempts) for s in r.stage_history)["upload_script"] == 5


def test_restart_trial_uses_fresh_attempt():
    policy = RemediationPolicy(ignore_budget=0, stage_retry_budget={"deliver_file": 0})
    res, _ = _scripted({"deliver_file": {1}}, policy)
    [r] = res.results
    assert r.status == "completed"
    assert r.trial_attempts == 2
    assert r.remediations == ("deliver_file:RestartTrial",)


def test_skip_stage_records_skipped():
    policy = RemediationPolicy(ladder=(Action.SKIP_STAGE,))
    res, _ = _scripted({"collect": {1}}, policy)
    [r] = res.results
    assert dict((s.stage, s.disposition) for s in r.stage_history)["collect"] == "Skipped"
    assert r.status == "completed"


def test_abort_trial_and_abort_experiment():
    policy = RemediationPolicy(ignore_budget=0, stage_retry_budget={"execute": 0}, trial_restart_budget=0)
    res, _ = _scripted({"execute": set(range(1, 100))}, policy)
    [r] = res.results
    assert r.aborted and r.record is None
    policy = RemediationPolicy(ladder=(Action.IGNORE_CONTINUE,), ignore_budget=1, terminal=Action.ABORT_EXPERIMENT)
    with pytest.raises(AbortExperiment):
        _scripted({"execute": {1, 2}}, policy)


def test_plan_and_orchestrator_validation():
    with pytest.raises(ConfigError):
        ExperimentPlan((TrialSpec("a", "f"), TrialSpec("a", "f")))
    with pytest.raises(ConfigError):
        ExperimentPlan((), worker_count=0)
    with pytest.raises(ConfigError):
        ExperimentPlan((), master_seed=2**64)
    files, backend = sim(1)
    plan = ExperimentPlan((TrialSpec("ml", files[0].file_id),), stages=(Stage("restore_snapshot", (("gpu", 1),)),))
    with pytest.raises(ConfigError):
        run_experiment(plan, backend, Warden(DEFAULT_LIMITS))


def test_wall_clock_mode_completes():
    files = synth_corpus(3, 2)
    backend = SimBackend(files, {"ml": preset("ml")}, master_seed=2, time_scale=1e-4)
    plan = plan_for(["ml"], [f.file_id for f in files], worker_count=2, trials_per_worker=2)
    res = run_experiment(plan, backend, Warden(DEFAULT_LIMITS), clock="wall", poll_interval_s=0.001)
    assert [r.status for r in res.results] == ["completed"] * 3
