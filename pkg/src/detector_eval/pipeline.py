"""Glue between the simulator, the raw tables and scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Mapping, Optional, Sequence

from .config import ExperimentConfig
from .costmodel import AnnualConfig, CurveMode, ToolScore, score_tool
from .model import DetectionOutcome, FileSample, TrialRecord, derive_outcome
from .metrics import MetricsSink
from .orchestrator import ExperimentResults, run_experiment
from .sandbox import SimBackend, synth_corpus
from .tables import Dataset
from .warden import Warden


def dataset_from_results(
    files: Sequence[FileSample], results: ExperimentResults, ambients=()
) -> Dataset:
    trials: list[TrialRecord] = []
    alerts = []
    for r in results.results:
        if r.aborted or r.record is None:
            nan = math.nan
            trials.append(TrialRecord(r.spec.tool_id, r.spec.file_id, nan, nan, nan, aborted=True))
            continue
        trials.append(r.record)
        alerts.extend(r.alerts)
    return Dataset(list(files), trials, alerts, list(ambients))


@dataclass
class SimulationRun:
    config: ExperimentConfig
    files: list[FileSample]
    results: ExperimentResults
    dataset: Dataset
    sink: MetricsSink


def run_simulation(config: ExperimentConfig, metrics_stream: Optional[IO[str]] = None) -> SimulationRun:
    files = synth_corpus(
        config.corpus.n_files, config.seed, config.corpus.malware_share, config.corpus.zero_day_share
    )
    backend = SimBackend(files, config.detectors, config.timing, config.faults, master_seed=config.seed)
    sink = MetricsSink(metrics_stream)
    results = run_experiment(
        config.plan([f.file_id for f in files]),
        backend,
        Warden(config.limits),
        sink=sink,
        clock=config.clock,
    )
    dataset = dataset_from_results(files, results, backend.ambient_profiles())
    return SimulationRun(config, files, results, dataset, sink)


def derive_outcomes(dataset: Dataset) -> dict[tuple[str, str], DetectionOutcome]:
    """Outcome per scoreable trial; aborted trials are left out."""
    by_key: dict[tuple[str, str], list] = {}
    for alert in dataset.alerts:
        by_key.setdefault(alert.key, []).append(alert)
    return {
        t.key: derive_outcome(t, by_key.get(t.key, ())) for t in dataset.trials if not t.aborted
    }


def score_dataset(
    dataset: Dataset,
    config: ExperimentConfig,
    outcomes: Optional[Mapping[tuple[str, str], DetectionOutcome]] = None,
    mode: Optional[CurveMode] = None,
    annual: Optional[AnnualConfig] = None,
) -> dict[str, ToolScore]:
    outcomes = derive_outcomes(dataset) if outcomes is None else outcomes
    files = dataset.file_map
    ambient = {a.tool_id: a for a in dataset.ambients}
    trials_by_tool: dict[str, list[TrialRecord]] = {}
    for t in dataset.trials:
        trials_by_tool.setdefault(t.tool_id, []).append(t)
    return {
        tool: score_tool(
            tool,
            files,
            trials_by_tool[tool],
            outcomes,
            ambient.get(tool),
            config.profile(tool),
            annual or config.annual,
            config.costs,
            mode or config.mode,
        )
        for tool in sorted(trials_by_tool)
    }
