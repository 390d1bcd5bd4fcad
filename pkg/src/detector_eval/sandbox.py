"""Discrete-event stand-in for the VM farm.

Stages advance a per-VM virtual clock by seeded latency draws; detectors
are parametric presets rather than content analyzers. Every random stream
is derived from the master seed and the trial identity, never from the
order in which the orchestrator happens to poll.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from statistics import NormalDist
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from .model import (
    AlertEvent,
    AmbientProfile,
    FileSample,
    FileType,
    Label,
    ResourceSample,
    StageEntry,
    TrialRecord,
)
from .remediation import StageException

_STD_NORMAL = NormalDist()

STAGES = ("restore_snapshot", "upload_script", "deliver_file", "static_wait", "execute", "collect")


class Lifecycle(str, Enum):
    OFF = "Off"
    RESTORING = "Restoring"
    READY = "Ready"
    SCRIPT_LOADED = "ScriptLoaded"
    FILE_DELIVERED = "FileDelivered"
    EXECUTING = "Executing"
    COLLECTED = "Collected"


# stage -> (lifecycle required on entry, lifecycle while running, lifecycle once done)
TRANSITIONS = {
    "restore_snapshot": (Lifecycle.OFF, Lifecycle.RESTORING, Lifecycle.READY),
    "upload_script": (Lifecycle.READY, Lifecycle.READY, Lifecycle.SCRIPT_LOADED),
    "deliver_file": (Lifecycle.SCRIPT_LOADED, Lifecycle.SCRIPT_LOADED, Lifecycle.FILE_DELIVERED),
    "static_wait": (Lifecycle.FILE_DELIVERED, Lifecycle.FILE_DELIVERED, Lifecycle.FILE_DELIVERED),
    "execute": (Lifecycle.FILE_DELIVERED, Lifecycle.EXECUTING, Lifecycle.EXECUTING),
    "collect": (Lifecycle.EXECUTING, Lifecycle.EXECUTING, Lifecycle.COLLECTED),
}


class StageFault(StageException):
    def __init__(self, stage: str, persistent: bool = False):
        kind = "persistent" if persistent else "transient"
        super().__init__(f"{kind} fault in {stage}")
        self.stage = stage
        self.persistent = persistent


class IllegalTransition(StageException):
    pass


def derive_seed(master_seed: int, *parts: Any) -> int:
    """Stable 64-bit seed from the master seed and identifying parts."""
    text = "\x1f".join([str(int(master_seed))] + [str(p) for p in parts])
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


def derive_rng(master_seed: int, *parts: Any) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, *parts))


@dataclass(frozen=True)
class Dist:
    """Nonnegative latency distribution; ``mean`` is the constant value for ``constant``."""

    kind: str = "constant"
    mean: float = 0.0
    spread: float = 0.0  # uniform half-width, or lognormal sigma

    def __post_init__(self):
        if self.kind not in ("constant", "uniform", "lognormal", "exponential"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.mean < 0 or self.spread < 0:
            raise ValueError("distribution parameters must be nonnegative")

    @classmethod
    def of(cls, value: "Dist | float | Mapping[str, Any]") -> "Dist":
        if isinstance(value, Dist):
            return value
        if isinstance(value, Mapping):
            return cls(**value)
        return cls("constant", float(value))

    def sample(self, rng: np.random.Generator) -> float:
        # one uniform draw per call regardless of kind keeps stream positions stable
        u = rng.random()
        if self.kind == "constant" or self.mean == 0:
            return self.mean
        if self.kind == "uniform":
            return max(0.0, self.mean - self.spread + 2.0 * self.spread * u)
        if self.kind == "exponential":
            return -self.mean * math.log1p(-u)
        # lognormal parameterised by its median and sigma
        z = _norm_ppf(u)
        return self.mean * math.exp(self.spread * z)


def _norm_ppf(u: float) -> float:
    return _STD_NORMAL.inv_cdf(min(max(u, 1e-12), 1 - 1e-12))


class DetectorKind(str, Enum):
    SIGNATURE = "Signature"
    ML_STATIC = "MLStatic"
    DYNAMIC_ONLY = "DynamicOnly"


@dataclass(frozen=True)
class ResourceModel:
    cpu_fraction: float = 0.0
    ram_bytes: float = 0.0
    hdd_read_bytes_per_s: float = 0.0
    hdd_write_bytes_per_s: float = 0.0
    noise: float = 0.0  # relative standard deviation

    def __post_init__(self):
        if not 0 <= self.cpu_fraction <= 1:
            raise ValueError("cpu_fraction must lie in [0, 1]")
        if min(self.ram_bytes, self.hdd_read_bytes_per_s, self.hdd_write_bytes_per_s, self.noise) < 0:
            raise ValueError("resource parameters must be nonnegative")


@dataclass(frozen=True)
class DetectorModel:
    kind: DetectorKind
    recall_by_filetype: Mapping[FileType, float] = field(default_factory=dict)
    zero_day_recall: float = 0.0
    known_hash_fraction: float = 1.0
    false_positive_rate: float = 0.001
    static_latency: Dist = Dist()
    dynamic_latency: Dist = Dist()
    post_close_fraction: Optional[float] = None
    post_close_delay: Dist = Dist("constant", 60.0)
    resources: ResourceModel = ResourceModel()
    ambient: ResourceModel = ResourceModel()
    setup_hours: float = 0.0
    appliance_total: float = 0.0
    appliance_annual: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", DetectorKind(self.kind))
        recalls = {FileType(k): float(v) for k, v in self.recall_by_filetype.items()}
        object.__setattr__(self, "recall_by_filetype", recalls)
        for name in ("static_latency", "dynamic_latency", "post_close_delay"):
            object.__setattr__(self, name, Dist.of(getattr(self, name)))
        probs = [self.zero_day_recall, self.known_hash_fraction, self.false_positive_rate, *recalls.values()]
        if self.post_close_fraction is not None:
            probs.append(self.post_close_fraction)
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("detector probabilities must lie in [0, 1]")

    def detection_probability(self, file: FileSample) -> float:
        if file.label is Label.BENIGN:
            return self.false_positive_rate
        if file.zero_day:
            p = self.zero_day_recall
            if self.kind is DetectorKind.SIGNATURE:
                p *= self.known_hash_fraction
            return p
        return self.recall_by_filetype.get(file.file_type, 0.0)


def detector_verdict(
    model: DetectorModel,
    file: FileSample,
    t_download: float,
    t_execute: float,
    t_close: float,
    rng: np.random.Generator,
    tool_id: str = "",
) -> Optional[AlertEvent]:
    """Draw whether (and when) a detector alerts on one delivered file."""
    if not t_download <= t_execute <= t_close:
        raise ValueError("detector verdict needs t_download <= t_execute <= t_close")
    u_detect, u_late = rng.random(), rng.random()
    static = model.static_latency.sample(rng)
    dynamic = model.dynamic_latency.sample(rng)
    late = model.post_close_delay.sample(rng)
    if u_detect >= model.detection_probability(file):
        return None
    if model.kind is DetectorKind.DYNAMIC_ONLY:
        t_alert = t_execute + dynamic
    else:
        t_alert = t_download + static
    if model.post_close_fraction is not None and u_late < model.post_close_fraction:
        t_alert = max(t_alert, t_close + late)
    return AlertEvent(tool_id, file.file_id, t_alert)


def sample_resources(
    model: ResourceModel, start: float, end: float, rng: np.random.Generator
) -> list[ResourceSample]:
    """Per-second samples on [start, end)."""
    n = max(0, int(math.ceil(end - start - 1e-9)))
    if n == 0:
        return []
    means = np.array([model.cpu_fraction, model.ram_bytes, model.hdd_read_bytes_per_s, model.hdd_write_bytes_per_s])
    noise = rng.standard_normal((n, 4))
    values = means * (1.0 + model.noise * noise) if model.noise > 0 else np.tile(means, (n, 1))
    values = np.maximum(values, 0.0)
    values[:, 0] = np.minimum(values[:, 0], 1.0)
    return [
        ResourceSample(start + i, float(row[0]), float(row[1]), float(row[2]), float(row[3]))
        for i, row in enumerate(values)
    ]


def measure_ambient(
    tool_id: str, model: ResourceModel, rng: np.random.Generator, duration_s: float = 300.0
) -> AmbientProfile:
    samples = sample_resources(model, 0.0, duration_s, rng)
    n = len(samples)
    return AmbientProfile(
        tool_id=tool_id,
        duration_s=duration_s,
        mean_cpu_fraction=math.fsum(s.cpu_fraction for s in samples) / n,
        mean_ram_bytes=math.fsum(s.ram_bytes for s in samples) / n,
        mean_hdd_read_bytes_per_s=math.fsum(s.hdd_read_bytes for s in samples) / n,
        mean_hdd_write_bytes_per_s=math.fsum(s.hdd_write_bytes for s in samples) / n,
    )


@dataclass(frozen=True)
class StageTiming:
    restore_snapshot: Dist = Dist("constant", 20.0)
    upload_script: Dist = Dist("constant", 5.0)
    deliver_file: Dist = Dist("constant", 2.0)
    static_wait_s: float = 60.0
    static_overshoot: Dist = Dist("constant", 30.0)
    dynamic_wait_s: float = 60.0
    collect: Dist = Dist("constant", 10.0)

    def __post_init__(self):
        for name in ("restore_snapshot", "upload_script", "deliver_file", "static_overshoot", "collect"):
            object.__setattr__(self, name, Dist.of(getattr(self, name)))
        if self.static_wait_s <= 0 or self.dynamic_wait_s <= 0:
            raise ValueError("static and dynamic waits must be positive")


@dataclass(frozen=True)
class FaultConfig:
    transient: Mapping[str, float] | float = 0.0
    persistent: float = 0.0
    persistent_trials: frozenset = frozenset()  # {(tool_id, file_id)}
    persistent_stage: str = "restore_snapshot"

    def __post_init__(self):
        object.__setattr__(self, "persistent_trials", frozenset(tuple(k) for k in self.persistent_trials))
        probs = [self.persistent]
        probs += list(self.transient.values()) if isinstance(self.transient, Mapping) else [self.transient]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("fault probabilities must lie in [0, 1]")
        if self.persistent_stage not in STAGES:
            raise ValueError(f"unknown stage {self.persistent_stage!r}")

    def transient_probability(self, stage: str) -> float:
        if isinstance(self.transient, Mapping):
            return float(self.transient.get(stage, 0.0))
        return float(self.transient)


@dataclass
class StageLog:
    exit_code: int = 0
    stdout: str = ""
    stderr: str = ""


@dataclass
class VmState:
    """One trial's VM. Owned by exactly one trial at a time."""

    tool_id: str
    file: FileSample
    detector: DetectorModel
    rng: np.random.Generator
    persistent_fault_stage: Optional[str] = None
    lifecycle: Lifecycle = Lifecycle.OFF
    t: float = 0.0
    done_at: Optional[float] = None
    t_download: Optional[float] = None
    t_execute: Optional[float] = None
    t_close: Optional[float] = None
    logs: dict[str, StageLog] = field(default_factory=dict)


@dataclass(frozen=True)
class StageOutcome:
    stage: str
    started: float
    done_at: float
    lifecycle: Lifecycle


def simulate_stage(vm: VmState, stage: str, now: float, timing: StageTiming = StageTiming()) -> StageOutcome:
    """Start ``stage`` on ``vm`` at ``now``; returns when it will be finished."""
    if stage not in TRANSITIONS:
        raise IllegalTransition(f"unknown stage {stage!r}")
    entry, running, _ = TRANSITIONS[stage]
    if vm.lifecycle is not entry:
        raise IllegalTransition(f"{stage} needs VM in {entry.value}, found {vm.lifecycle.value}")
    now = max(now, vm.t)
    if stage == "static_wait":
        duration = timing.static_wait_s + timing.static_overshoot.sample(vm.rng)
    elif stage == "execute":
        duration = timing.dynamic_wait_s
        vm.t_execute = now
    else:
        duration = getattr(timing, stage).sample(vm.rng)
    done_at = now + duration
    if stage == "deliver_file":
        vm.t_download = done_at
    elif stage == "execute":
        # the detection window closes when the dynamic wait ends
        vm.t_close = done_at
    vm.lifecycle = running
    vm.t = now
    vm.done_at = done_at
    return StageOutcome(stage, now, done_at, running)


def finish_stage(vm: VmState, stage: str, now: float) -> bool:
    if vm.done_at is None or now < vm.done_at:
        return False
    vm.lifecycle = TRANSITIONS[stage][2]
    vm.t = max(vm.t, vm.done_at)
    vm.done_at = None
    return True


# Reference malware counts per file type; used as the default malware mix.
TABLE4_MALWARE_COUNTS = {
    FileType.COMPRESSED: 3252,
    FileType.HTML: 4575,
    FileType.IMAGE: 986,
    FileType.JAR: 127,
    FileType.MSOFFICE: 299,
    FileType.PDF: 3977,
    FileType.PE: 26930,
    FileType.SOURCECODE: 905,
    FileType.TEXT: 8738,
    FileType.XML: 211,
}

DEFAULT_BENIGN_MIX = {
    FileType.PE: 0.40,
    FileType.TEXT: 0.20,
    FileType.HTML: 0.15,
    FileType.PDF: 0.10,
    FileType.COMPRESSED: 0.10,
    FileType.IMAGE: 0.05,
}


def _apportion(total: int, weights: Mapping[FileType, float]) -> dict[FileType, int]:
    """Largest-remainder split of ``total`` items by ``weights``."""
    keys = sorted(weights, key=lambda k: k.value)
    w = np.array([float(weights[k]) for k in keys])
    if total == 0 or w.sum() <= 0:
        return {k: 0 for k in keys}
    exact = total * w / w.sum()
    counts = np.floor(exact).astype(int)
    order = sorted(range(len(keys)), key=lambda i: (-(exact[i] - counts[i]), keys[i].value))
    for i in order[: total - counts.sum()]:
        counts[i] += 1
    return {k: int(c) for k, c in zip(keys, counts)}


def synth_corpus(
    n_files: int,
    seed: int,
    malware_share: float = 0.5,
    zero_day_share: float = 0.02,
    malware_mix: Optional[Mapping[FileType, float]] = None,
    benign_mix: Optional[Mapping[FileType, float]] = None,
) -> list[FileSample]:
    """Labelled test corpus with exact type counts; zero-days are drawn from the malicious PEs."""
    malware_mix = {FileType(k): v for k, v in (malware_mix or TABLE4_MALWARE_COUNTS).items()}
    benign_mix = {FileType(k): v for k, v in (benign_mix or DEFAULT_BENIGN_MIX).items()}
    n_mal = int(round(n_files * malware_share))
    rng = derive_rng(seed, "corpus")
    entries: list[tuple[FileType, Label]] = []
    for ftype, n in _apportion(n_mal, malware_mix).items():
        entries += [(ftype, Label.MALICIOUS)] * n
    for ftype, n in _apportion(n_files - n_mal, benign_mix).items():
        entries += [(ftype, Label.BENIGN)] * n
    order = rng.permutation(len(entries))
    entries = [entries[i] for i in order]

    mal_pe = [i for i, (ft, lab) in enumerate(entries) if lab is Label.MALICIOUS and ft is FileType.PE]
    n_zero = int(round(len(mal_pe) * zero_day_share))
    zero = set(rng.choice(mal_pe, size=n_zero, replace=False).tolist()) if n_zero else set()

    width = max(5, len(str(n_files)))
    files = []
    for i, (ftype, label) in enumerate(entries):
        fid = f"f{i:0{width}d}"
        size = int(rng.integers(1_000, 5_000_000))
        files.append(FileSample(fid, f"{fid}.{ftype.value.lower()}", ftype, label, i in zero, size))
    return files


def _recalls(**by_type: float) -> dict[FileType, float]:
    names = {
        "compressed": FileType.COMPRESSED,
        "html": FileType.HTML,
        "image": FileType.IMAGE,
        "jar": FileType.JAR,
        "msoffice": FileType.MSOFFICE,
        "pdf": FileType.PDF,
        "pe": FileType.PE,
        "sourcecode": FileType.SOURCECODE,
        "text": FileType.TEXT,
        "xml": FileType.XML,
    }
    return {names[k]: v for k, v in by_type.items()}


MB = 1 << 20

# Presets calibrated to reference per-tool aggregates: public-PE and
# zero-day recall from the ML-versus-signature table, other file types from
# the per-filetype recall table, latencies from the median time-to-detect row.
PRESETS: dict[str, DetectorModel] = {
    "tool1": DetectorModel(
        DetectorKind.ML_STATIC,
        _recalls(compressed=0.3155, pe=0.807),
        zero_day_recall=0.455,
        false_positive_rate=0.0039,
        static_latency=Dist("constant", 33.0),
        resources=ResourceModel(0.04, 300 * MB, 20_000, 10_000),
        ambient=ResourceModel(0.02, 250 * MB, 5_000, 5_000),
        setup_hours=10.0,
        appliance_total=19_000.0,
    ),
    "tool2": DetectorModel(
        DetectorKind.ML_STATIC,
        _recalls(compressed=0.0037, msoffice=0.4916, pe=0.879, xml=0.0711),
        zero_day_recall=0.401,
        false_positive_rate=0.0009,
        static_latency=Dist("constant", 0.0),
        resources=ResourceModel(0.03, 200 * MB, 10_000, 10_000),
        ambient=ResourceModel(0.01, 150 * MB, 2_000, 2_000),
        setup_hours=8.0,
        appliance_total=100_000.0,
        appliance_annual=10.0,
    ),
    "tool3": DetectorModel(
        DetectorKind.ML_STATIC,
        _recalls(
            compressed=0.3198, html=0.4485, image=0.4229, jar=0.0551, msoffice=0.5151,
            pdf=0.5967, pe=0.598, sourcecode=0.3138, text=0.3425, xml=0.5308,
        ),
        zero_day_recall=0.381,
        false_positive_rate=0.0007,
        static_latency=Dist("constant", 1.0),
        post_close_fraction=0.05,
        resources=ResourceModel(0.15, 900 * MB, 50_000, 50_000),
        ambient=ResourceModel(0.06, 800 * MB, 20_000, 20_000),
        setup_hours=8.0,
        appliance_total=120_000.0,
        appliance_annual=2.0,
    ),
    "tool4": DetectorModel(
        DetectorKind.ML_STATIC,
        _recalls(
            compressed=0.0231, html=0.0807, image=0.07, msoffice=0.4783, pdf=0.3377,
            pe=0.710, sourcecode=0.1293, text=0.2385, xml=0.1185,
        ),
        zero_day_recall=0.278,
        false_positive_rate=0.0004,
        static_latency=Dist("constant", 55.0),
        resources=ResourceModel(0.18, 1000 * MB, 60_000, 40_000),
        ambient=ResourceModel(0.05, 700 * MB, 10_000, 10_000),
        setup_hours=8.0,
        appliance_total=80_000.0,
    ),
    "baseline1": DetectorModel(
        DetectorKind.DYNAMIC_ONLY,
        _recalls(
            compressed=0.0532, image=0.6653, msoffice=0.5485, pe=0.682, sourcecode=0.4807, text=0.5921,
        ),
        zero_day_recall=0.038,
        false_positive_rate=0.0001,
        dynamic_latency=Dist("constant", 9.0),
        resources=ResourceModel(0.03, 200 * MB, 8_000, 8_000),
        ambient=ResourceModel(0.01, 150 * MB, 2_000, 2_000),
    ),
    "baseline2": DetectorModel(
        DetectorKind.SIGNATURE,
        _recalls(
            compressed=0.4459, html=0.649, image=0.0558, msoffice=0.8194, pdf=0.9233,
            pe=0.766, sourcecode=0.4994, text=0.4059, xml=0.6351,
        ),
        zero_day_recall=0.766,
        known_hash_fraction=0.044 / 0.766,
        false_positive_rate=0.0002,
        static_latency=Dist("constant", 4.0),
        resources=ResourceModel(0.04, 300 * MB, 10_000, 10_000),
        ambient=ResourceModel(0.02, 250 * MB, 4_000, 4_000),
    ),
}

# Generic profiles for the ML-versus-signature comparison: the signature
# profile keeps the second baseline's non-PE coverage, the ML profile the
# PE-centric coverage typical of the ML entrants.
PRESETS["signature"] = replace(
    PRESETS["baseline2"],
    recall_by_filetype={**PRESETS["baseline2"].recall_by_filetype, FileType.PE: 0.70},
    zero_day_recall=0.70,
    known_hash_fraction=0.04 / 0.70,
    false_positive_rate=0.001,
)
PRESETS["ml"] = replace(
    PRESETS["tool2"],
    recall_by_filetype={**PRESETS["tool2"].recall_by_filetype, FileType.PE: 0.85},
    zero_day_recall=0.40,
    false_positive_rate=0.001,
    appliance_total=0.0,
    appliance_annual=0.0,
)


def preset(name: str, **overrides) -> DetectorModel:
    try:
        base = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown detector preset {name!r}; known: {sorted(PRESETS)}") from None
    return replace(base, **overrides) if overrides else base


class SimBackend:
    """Simulated endpoint backend driven by the orchestrator's stage calls.

    ``time_scale`` shrinks simulated durations when running against the
    wall clock; in virtual time it stays 1.
    """

    def __init__(
        self,
        files: Iterable[FileSample],
        detectors: Mapping[str, DetectorModel],
        timing: StageTiming = StageTiming(),
        faults: FaultConfig = FaultConfig(),
        master_seed: int = 0,
        time_scale: float = 1.0,
    ):
        self.files = {f.file_id: f for f in files}
        self.detectors = dict(detectors)
        self.timing = timing
        self.faults = faults
        self.master_seed = master_seed
        self.time_scale = time_scale

    def _persistent_stage(self, tool_id: str, file_id: str) -> Optional[str]:
        if (tool_id, file_id) in self.faults.persistent_trials:
            return self.faults.persistent_stage
        if self.faults.persistent > 0:
            rng = derive_rng(self.master_seed, tool_id, file_id, "persistent")
            if rng.random() < self.faults.persistent:
                return STAGES[int(rng.integers(len(STAGES)))]
        return None

    def new_state(self, tool_id: str, file_id: str, trial_attempt: int) -> VmState:
        return VmState(
            tool_id=tool_id,
            file=self.files[file_id],
            detector=self.detectors[tool_id],
            rng=derive_rng(self.master_seed, tool_id, file_id, "attempt", trial_attempt),
            persistent_fault_stage=self._persistent_stage(tool_id, file_id),
        )

    def start_stage(self, stage: str, vm: VmState, now: float) -> float:
        fault_draw = vm.rng.random()
        if vm.persistent_fault_stage == stage:
            raise StageFault(stage, persistent=True)
        if fault_draw < self.faults.transient_probability(stage):
            raise StageFault(stage)
        outcome = simulate_stage(vm, stage, now / self.time_scale, self.timing)
        return outcome.done_at * self.time_scale

    def check_stage(self, stage: str, vm: VmState, now: float) -> bool:
        if not finish_stage(vm, stage, now / self.time_scale):
            return False
        if stage == "collect":
            vm.logs["execute"] = StageLog(0, f"executed {vm.file.display_name}", "")
        return True

    def next_wake(self, vm: VmState) -> Optional[float]:
        return None if vm.done_at is None else vm.done_at * self.time_scale

    def reset_stage(self, stage: str, vm: VmState) -> None:
        vm.lifecycle = TRANSITIONS[stage][0]
        vm.done_at = None

    def skip_stage(self, stage: str, vm: VmState) -> None:
        vm.lifecycle = TRANSITIONS[stage][2]
        vm.done_at = None

    def discard(self, vm: VmState) -> None:
        vm.lifecycle = Lifecycle.OFF
        vm.done_at = None

    def results(
        self, vm: VmState, stage_history: Sequence[StageEntry]
    ) -> tuple[Optional[TrialRecord], tuple[AlertEvent, ...], dict[str, StageLog]]:
        """Trial record (times relative to delivery), alerts and logs for a finished VM."""
        if None in (vm.t_download, vm.t_execute, vm.t_close):
            return None, (), dict(vm.logs)
        t0 = vm.t_download
        te, tc = vm.t_execute - t0, vm.t_close - t0
        verdict_rng = derive_rng(self.master_seed, vm.tool_id, vm.file.file_id, "verdict")
        alert = detector_verdict(vm.detector, vm.file, 0.0, te, tc, verdict_rng, vm.tool_id)
        series = sample_resources(vm.detector.resources, 0.0, tc, verdict_rng)
        record = TrialRecord(
            tool_id=vm.tool_id,
            file_id=vm.file.file_id,
            t_download=0.0,
            t_execute=te,
            t_close=tc,
            resource_series=tuple(series),
            stage_history=tuple(stage_history),
        )
        return record, (() if alert is None else (alert,)), dict(vm.logs)

    def ambient_profiles(self, duration_s: float = 300.0) -> list[AmbientProfile]:
        return [
            measure_ambient(tool_id, model.ambient, derive_rng(self.master_seed, tool_id, "ambient"), duration_s)
            for tool_id, model in sorted(self.detectors.items())
        ]
