"""Experiment configuration loaded from TOML.

Every section is optional; the defaults make up the desk preset (five
simulated tools over 200 files, 10 workers x 20 trials). Example::

    seed = 7
    workers = 10
    trials_per_worker = 20
    tools = ["ml", "signature", "tool1", "tool3", "baseline1"]

    [corpus]
    n_files = 200

    [resources.snapshot-restore]
    limit = 4

    [tools.ml]                 # optional per-tool overrides of a preset
    preset = "ml"
    zero_day_recall = 0.45

    [faults]
    transient = 0.02

    [annual]
    zero_day_fraction_of_malware = 0.01
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Union

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .costmodel import AnnualConfig, CostConstants, CurveMode, ToolProfile
from .orchestrator import DEFAULT_DEMANDS, DEFAULT_LIMITS, ConfigError, ExperimentPlan, default_stages, plan_for
from .remediation import RemediationPolicy
from .sandbox import DetectorModel, Dist, FaultConfig, ResourceModel, StageTiming, preset

DESK_TOOLS = ("ml", "signature", "tool1", "tool3", "baseline1")

_TOP_KEYS = {
    "seed", "workers", "trials_per_worker", "clock", "mode", "retry_delay_s", "tools",
    "corpus", "resources", "demands", "timing", "remediation", "faults", "annual", "costs", "sweep",
}


@dataclass(frozen=True)
class CorpusConfig:
    n_files: int = 200
    malware_share: float = 0.5
    zero_day_share: float = 0.1

    def __post_init__(self):
        if self.n_files < 1:
            raise ConfigError("corpus.n_files must be positive")
        if not (0 <= self.malware_share <= 1 and 0 <= self.zero_day_share <= 1):
            raise ConfigError("corpus shares must lie in [0, 1]")


@dataclass(frozen=True)
class SweepConfig:
    grid: str = "0:100000:101"
    zero_day_fraction: float = 0.01
    ml_tool: Optional[str] = "ml"
    signature_tool: Optional[str] = "signature"


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    workers: int = 10
    trials_per_worker: int = 20
    clock: str = "virtual"
    mode: CurveMode = CurveMode.CONSTRAINT_DERIVED
    retry_delay_s: float = 1.0
    detectors: Mapping[str, DetectorModel] = field(default_factory=lambda: {t: preset(t) for t in DESK_TOOLS})
    corpus: CorpusConfig = CorpusConfig()
    limits: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_LIMITS))
    demands: Mapping[str, tuple] = field(default_factory=lambda: dict(DEFAULT_DEMANDS))
    timing: StageTiming = StageTiming()
    remediation: RemediationPolicy = RemediationPolicy()
    faults: FaultConfig = FaultConfig()
    annual: AnnualConfig = AnnualConfig()
    costs: CostConstants = CostConstants()
    sweep: SweepConfig = SweepConfig()

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.clock not in ("virtual", "wall"):
            raise ConfigError(f"clock must be 'virtual' or 'wall', got {self.clock!r}")
        if not self.detectors:
            raise ConfigError("at least one tool is required")
        object.__setattr__(self, "mode", CurveMode(self.mode))
        for cls, needs in self.demands.items():
            for name, _ in needs:
                if name not in self.limits:
                    raise ConfigError(f"stage {cls!r} demands unknown resource class {name!r}")

    @property
    def tools(self) -> tuple[str, ...]:
        return tuple(self.detectors)

    def profile(self, tool_id: str) -> ToolProfile:
        model = self.detectors.get(tool_id)
        if model is None:
            return ToolProfile()
        return ToolProfile(model.setup_hours, model.appliance_total, model.appliance_annual)

    def plan(self, file_ids) -> ExperimentPlan:
        return plan_for(
            self.tools,
            file_ids,
            worker_count=self.workers,
            trials_per_worker=self.trials_per_worker,
            master_seed=self.seed,
            remediation=self.remediation,
            stages=default_stages(self.demands),
            retry_delay_s=self.retry_delay_s,
        )


def _build(cls, raw: Mapping[str, Any], section: str, **convert):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"[{section}] unknown keys {unknown}; known: {sorted(known)}")
    kwargs = {k: convert[k](v) if k in convert else v for k, v in raw.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def _dist(value) -> Dist:
    return Dist.of(dict(value) if isinstance(value, Mapping) else value)


def _detector(name: str, raw: Mapping[str, Any]) -> DetectorModel:
    raw = dict(raw)
    base = preset(str(raw.pop("preset", name)))
    overrides: dict[str, Any] = {}
    for key, value in raw.items():
        if key in ("resources", "ambient"):
            overrides[key] = _build(ResourceModel, value, f"tools.{name}.{key}")
        elif key == "recall_by_filetype":
            overrides[key] = {**base.recall_by_filetype, **dict(value)}
        elif key in ("static_latency", "dynamic_latency", "post_close_delay"):
            overrides[key] = _dist(value)
        else:
            overrides[key] = value
    try:
        return replace(base, **overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[tools.{name}] {exc}") from exc


def _detectors(raw) -> dict[str, DetectorModel]:
    if isinstance(raw, list):
        return {str(name): _detector(str(name), {}) for name in raw}
    if isinstance(raw, Mapping):
        return {str(name): _detector(str(name), spec or {}) for name, spec in raw.items()}
    raise ConfigError("tools must be a list of preset names or a table of tool tables")


def _limits(raw: Mapping[str, Any]) -> dict[str, int]:
    limits = dict(DEFAULT_LIMITS)
    for name, spec in raw.items():
        limit = spec.get("limit") if isinstance(spec, Mapping) else spec
        if not isinstance(limit, int) or limit < 1:
            raise ConfigError(f"resources.{name}.limit must be a positive integer")
        limits[str(name)] = limit
    return limits


def config_from_dict(raw: Mapping[str, Any]) -> ExperimentConfig:
    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level config keys {unknown}")
    kw: dict[str, Any] = {}
    for key in ("seed", "workers", "trials_per_worker", "clock", "mode", "retry_delay_s"):
        if key in raw:
            kw[key] = raw[key]
    if "tools" in raw:
        kw["detectors"] = _detectors(raw["tools"])
    if "corpus" in raw:
        kw["corpus"] = _build(CorpusConfig, raw["corpus"], "corpus")
    if "resources" in raw:
        kw["limits"] = _limits(raw["resources"])
    if "demands" in raw:
        kw["demands"] = {
            stage: tuple((str(c), int(n)) for c, n in dict(d).items()) for stage, d in raw["demands"].items()
        }
    if "timing" in raw:
        dists = ("restore_snapshot", "upload_script", "deliver_file", "static_overshoot", "collect")
        kw["timing"] = _build(StageTiming, raw["timing"], "timing", **{k: _dist for k in dists})
    if "remediation" in raw:
        kw["remediation"] = _build(
            RemediationPolicy, raw["remediation"], "remediation", ladder=tuple, stage_retry_budget=dict
        )
    if "faults" in raw:
        kw["faults"] = _build(
            FaultConfig,
            raw["faults"],
            "faults",
            persistent_trials=lambda v: frozenset(tuple(x) for x in v),
            transient=lambda v: dict(v) if isinstance(v, Mapping) else float(v),
        )
    if "annual" in raw:
        kw["annual"] = _build(AnnualConfig, raw["annual"], "annual")
    if "costs" in raw:
        kw["costs"] = _build(CostConstants, raw["costs"], "costs")
    if "sweep" in raw:
        kw["sweep"] = _build(SweepConfig, raw["sweep"], "sweep")
    try:
        return ExperimentConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: Optional[Union[str, Path]] = None) -> ExperimentConfig:
    """Read a TOML config; ``None`` gives the desk preset."""
    if path is None:
        return ExperimentConfig()
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw)
