"""Cost-aware evaluation of malware detectors: simulated trials, scoring and reports."""

from .costmodel import (
    AnnualConfig,
    AnnualCostBreakdown,
    AttackCostCurve,
    CostConstants,
    CurveMode,
    annualize,
    attack_cost,
    sweep_zero_day_cost,
)
from .model import AlertEvent, DetectionOutcome, FileSample, Phase, TrialRecord, derive_outcome
from .orchestrator import ExperimentPlan, run_experiment
from .warden import Warden

__version__ = "0.1.0"

__all__ = [
    "AlertEvent",
    "AnnualConfig",
    "AnnualCostBreakdown",
    "AttackCostCurve",
    "CostConstants",
    "CurveMode",
    "DetectionOutcome",
    "ExperimentPlan",
    "FileSample",
    "Phase",
    "TrialRecord",
    "Warden",
    "annualize",
    "attack_cost",
    "derive_outcome",
    "run_experiment",
    "sweep_zero_day_cost",
]
