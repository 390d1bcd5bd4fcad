"""Cost-benefit scoring: attack-cost curve, per-file costs and annual totals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

from .gamma import gamma_density, gammainc_lower
from .model import (
    AmbientProfile,
    DetectionOutcome,
    FileSample,
    ModelError,
    Phase,
    ResourceSample,
    TrialRecord,
)

GIB = float(2**30)
MINUTES_PER_YEAR = 365 * 24 * 60


class CostModelError(ModelError):
    pass


class NonpositiveTe(CostModelError):
    pass


class LabelMismatch(CostModelError):
    pass


class NegativeRemainingTime(CostModelError):
    pass


class EmptyGrid(CostModelError):
    pass


class CurveMode(str, Enum):
    PAPER_PRINTED = "paper-printed"
    CONSTRAINT_DERIVED = "constraint-derived"


@dataclass(frozen=True)
class CostConstants:
    labor_rate: float = 70.0  # $/hour
    triage_hours: float = 0.5
    siem_fee: float = 0.05
    ir_hours: float = 2.0
    cpu_rate: float = 0.02444 / 3  # $/hour for one full CPU
    ram_rate: float = 0.00328 / 3  # $/GB-hour
    hdd_rate_monthly: float = 0.05 / 3  # $/GB-month
    days_per_month: float = 30.5
    max_attack_cost: float = 1000.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise CostModelError(f"{f.name} must be nonnegative")

    @property
    def triage(self) -> float:
        return self.triage_hours * self.labor_rate + self.siem_fee

    @property
    def ir(self) -> float:
        return self.ir_hours * self.labor_rate

    @property
    def hdd_rate(self) -> float:
        """Storage rate in $/GB-hour."""
        return self.hdd_rate_monthly / self.days_per_month / 24.0


@dataclass(frozen=True)
class AnnualConfig:
    files_per_year: int = 50_000
    malware_fraction: float = 0.0116
    zero_day_fraction_of_malware: float = 0.0
    zero_day_max_cost: Optional[float] = None  # None -> same as the public maximum
    network_size_hosts: int = 10_000
    free_setup_hours: float = 8.0

    def __post_init__(self):
        if self.files_per_year <= 0:
            raise CostModelError("files_per_year must be positive")
        for name in ("malware_fraction", "zero_day_fraction_of_malware"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise CostModelError(f"{name} must lie in [0, 1]")
        if self.network_size_hosts <= 0:
            raise CostModelError("network_size_hosts must be positive")

    @property
    def malware_per_year(self) -> float:
        return self.files_per_year * self.malware_fraction

    @property
    def benign_per_year(self) -> float:
        return self.files_per_year - self.malware_per_year


def attack_cost_params(te_rel: float, mode: CurveMode = CurveMode.CONSTRAINT_DERIVED) -> tuple[float, float]:
    """Shape and rate of the attack-cost curve for an execution ``te_rel`` s after download.

    CONSTRAINT_DERIVED puts the first root of the third derivative at
    ``te_rel`` and the inflection one minute later. PAPER_PRINTED returns the
    alternative closed form, which does not satisfy those constraints.
    """
    if not te_rel > 0:
        raise NonpositiveTe(f"execution offset must be positive, got {te_rel}")
    mode = CurveMode(mode)
    if mode is CurveMode.PAPER_PRINTED:
        alpha = (1.0 + 60.0 / te_rel) ** 2 + 1.0
        beta = (alpha - 1.0) ** 2 / 60.0
    else:
        root = 1.0 + te_rel / 60.0
        alpha = root**2 + 1.0
        beta = root / 60.0
    return alpha, beta


@dataclass(frozen=True)
class AttackCostCurve:
    t0: float
    te: float
    alpha: float
    beta: float
    max_cost: float = 1000.0

    def __post_init__(self):
        if not self.alpha > 1:
            raise CostModelError(f"alpha must exceed 1, got {self.alpha}")
        if not self.beta > 0:
            raise CostModelError(f"beta must be positive, got {self.beta}")
        if not self.te > self.t0:
            raise NonpositiveTe(f"te ({self.te}) must follow t0 ({self.t0})")

    @classmethod
    def for_trial(
        cls,
        t0: float,
        te: float,
        mode: CurveMode = CurveMode.CONSTRAINT_DERIVED,
        max_cost: float = 1000.0,
    ) -> "AttackCostCurve":
        alpha, beta = attack_cost_params(te - t0, mode)
        return cls(t0, te, alpha, beta, max_cost)

    @property
    def normalizer(self) -> float:
        return math.exp(self.alpha * math.log(self.beta) - math.lgamma(self.alpha))

    def density(self, t: float) -> float:
        """Derivative of the unscaled curve (a Gamma density shifted by t0)."""
        return gamma_density(t - self.t0, self.alpha, self.beta)

    def __call__(self, t: float) -> float:
        return attack_cost(t, self)


def attack_cost(t: float, curve: AttackCostCurve) -> float:
    if t <= curve.t0:
        return 0.0
    return curve.max_cost * gammainc_lower(curve.alpha, curve.beta * (t - curve.t0))


def _check_label(file: FileSample, outcome: DetectionOutcome, malicious: bool) -> None:
    if file.file_id != outcome.file_id:
        raise CostModelError(f"outcome for {outcome.file_id} scored against file {file.file_id}")
    if file.malicious != malicious:
        want = "malicious" if malicious else "benign"
        raise LabelMismatch(f"{file.file_id} is {file.label.value}, expected {want}")


def malware_detection_cost(
    outcome: DetectionOutcome,
    file: FileSample,
    trial: TrialRecord,
    constants: CostConstants = CostConstants(),
    mode: CurveMode = CurveMode.CONSTRAINT_DERIVED,
    max_cost: Optional[float] = None,
) -> float:
    _check_label(file, outcome, malicious=True)
    top = constants.max_attack_cost if max_cost is None else max_cost
    if outcome.phase is Phase.NEVER:
        return top
    curve = AttackCostCurve.for_trial(trial.t_download, trial.t_execute, mode, top)
    response = constants.triage + constants.ir
    if outcome.phase is Phase.POST_CLOSE:
        late = (curve(trial.t_execute + 60.0) + (top - response)) / 2.0
        return late + response
    cost = curve(outcome.alert_time(trial.t_download))
    if outcome.phase is Phase.IN_WINDOW:
        cost += response
    return cost


def benign_detection_cost(
    outcome: DetectionOutcome, file: FileSample, constants: CostConstants = CostConstants()
) -> float:
    _check_label(file, outcome, malicious=False)
    return constants.triage if outcome.detected else 0.0


def _instant_rate(cpu: float, ram_bytes: float, hdd_bytes: float, constants: CostConstants) -> float:
    """Dollars per hour for a steady resource draw."""
    return cpu * constants.cpu_rate + ram_bytes / GIB * constants.ram_rate + hdd_bytes / GIB * constants.hdd_rate


def ambient_rate(profile: AmbientProfile, constants: CostConstants = CostConstants()) -> float:
    """Idle cost of a detector in dollars per minute.

    The per-second I/O means are the bytes moved in each one-second
    interval, matching how measured samples are charged.
    """
    hourly = _instant_rate(
        profile.mean_cpu_fraction,
        profile.mean_ram_bytes,
        profile.mean_hdd_read_bytes_per_s + profile.mean_hdd_write_bytes_per_s,
        constants,
    )
    return hourly / 60.0


def _window_end(outcome: DetectionOutcome, trial: TrialRecord) -> float:
    if outcome.phase is Phase.PRE_EXECUTION:
        return trial.t_execute
    if outcome.phase is Phase.IN_WINDOW:
        return min(max(outcome.alert_time(trial.t_download), trial.t_execute), trial.t_close)
    return trial.t_close


def file_resource_cost(
    series: Optional[Sequence[ResourceSample]],
    trial: TrialRecord,
    ambient_rate_per_min: float,
    outcome: DetectionOutcome,
    constants: CostConstants = CostConstants(),
) -> float:
    """Detector resource cost while one file is present.

    Measured samples are charged from delivery up to execution; after that
    the detector's ambient rate is scaled over the time until detection (or
    close). Samples from execution onward are ignored since they include the
    file's own usage. A missing series is imputed entirely at ambient rate.
    """
    end = _window_end(outcome, trial)
    window = [s for s in (series or ()) if trial.t_download <= s.t < trial.t_execute]
    if not window:
        return ambient_rate_per_min * (end - trial.t_download) / 60.0

    window.sort(key=lambda s: s.t)
    parts = []
    for i, sample in enumerate(window):
        upto = window[i + 1].t if i + 1 < len(window) else trial.t_execute
        dt = upto - sample.t
        # hdd figures are bytes moved during the interval, held at the storage rate for its length
        hourly = _instant_rate(
            sample.cpu_fraction, sample.ram_bytes, sample.hdd_read_bytes + sample.hdd_write_bytes, constants
        )
        parts.append(hourly * dt / 3600.0)
    parts.append(ambient_rate_per_min * (end - trial.t_execute) / 60.0)
    return math.fsum(parts)


def initial_cost(
    setup_hours: float,
    appliance_total: float = 0.0,
    annual_cfg: AnnualConfig = AnnualConfig(),
    constants: CostConstants = CostConstants(),
) -> float:
    if setup_hours < 0 or appliance_total < 0:
        raise CostModelError("setup hours and appliance cost must be nonnegative")
    labor = max(0.0, setup_hours - annual_cfg.free_setup_hours) * constants.labor_rate
    return labor + appliance_total / annual_cfg.network_size_hosts


@dataclass(frozen=True)
class AverageCosts:
    """Per-file averages from a scoring pass.

    The zero-day/public split is only consulted when the annual config
    assigns a nonzero zero-day share.
    """

    malware_detect: float = 0.0
    benign_detect: float = 0.0
    malware_resource: float = 0.0
    benign_resource: float = 0.0
    zero_day_malware_detect: Optional[float] = None
    public_malware_detect: Optional[float] = None


TABLE2_COST_ROWS = (
    "Initial Cost",
    "Annual Malware Resource Cost",
    "Annual Benignware Resource Cost",
    "Annual Ambient Endpoint Resource Cost",
    "Annual Appliance Resource Cost",
    "Annual Resource Cost",
    "Annual Malware Detect Cost",
    "Annual Benignware Detect Cost",
    "Annual Detect Cost",
    "Total Cost",
)


@dataclass(frozen=True)
class AnnualCostBreakdown:
    initial: float = 0.0
    annual_malware_resource: float = 0.0
    annual_benign_resource: float = 0.0
    annual_ambient_resource: float = 0.0
    annual_appliance_resource: float = 0.0
    annual_malware_detect: float = 0.0
    annual_benign_detect: float = 0.0

    @property
    def annual_resource(self) -> float:
        return math.fsum(
            (
                self.annual_malware_resource,
                self.annual_benign_resource,
                self.annual_ambient_resource,
                self.annual_appliance_resource,
            )
        )

    @property
    def annual_detect(self) -> float:
        return self.annual_malware_detect + self.annual_benign_detect

    @property
    def total(self) -> float:
        return math.fsum(getattr(self, f.name) for f in fields(self))

    def rows(self) -> list[tuple[str, float]]:
        """Labelled breakdown lines, subtotals included."""
        values = (
            self.initial,
            self.annual_malware_resource,
            self.annual_benign_resource,
            self.annual_ambient_resource,
            self.annual_appliance_resource,
            self.annual_resource,
            self.annual_malware_detect,
            self.annual_benign_detect,
            self.annual_detect,
            self.total,
        )
        return list(zip(TABLE2_COST_ROWS, values))


def annualize(
    avg: AverageCosts,
    ambient_rate_per_min: float = 0.0,
    mean_trial_minutes: float = 0.0,
    appliance_annual: float = 0.0,
    annual_cfg: AnnualConfig = AnnualConfig(),
    initial: float = 0.0,
) -> AnnualCostBreakdown:
    n_mal = annual_cfg.malware_per_year
    n_ben = annual_cfg.benign_per_year
    remaining = MINUTES_PER_YEAR - annual_cfg.files_per_year * mean_trial_minutes
    if remaining < 0:
        raise NegativeRemainingTime(
            f"{annual_cfg.files_per_year} files x {mean_trial_minutes} min exceeds one year"
        )

    zdf = annual_cfg.zero_day_fraction_of_malware
    if zdf > 0:
        if avg.zero_day_malware_detect is None or avg.public_malware_detect is None:
            raise CostModelError("zero-day share configured but zero-day/public averages missing")
        malware_detect = math.fsum(
            (avg.zero_day_malware_detect * zdf * n_mal, avg.public_malware_detect * (1.0 - zdf) * n_mal)
        )
    else:
        malware_detect = avg.malware_detect * n_mal

    return AnnualCostBreakdown(
        initial=initial,
        annual_malware_resource=avg.malware_resource * n_mal,
        annual_benign_resource=avg.benign_resource * n_ben,
        annual_ambient_resource=ambient_rate_per_min * remaining,
        annual_appliance_resource=appliance_annual,
        annual_malware_detect=malware_detect,
        annual_benign_detect=avg.benign_detect * n_ben,
    )


@dataclass(frozen=True)
class ToolProfile:
    """Cost inputs for a tool that do not come from trials."""

    setup_hours: float = 0.0
    appliance_total: float = 0.0
    appliance_annual: float = 0.0


@dataclass(frozen=True)
class ScoredFile:
    file: FileSample
    trial: TrialRecord
    outcome: DetectionOutcome
    detect_cost: float
    resource_cost: float


@dataclass
class ToolScore:
    tool_id: str
    files: list[ScoredFile]
    ambient_rate_per_min: float
    initial: float
    appliance_annual: float
    mode: CurveMode
    constants: CostConstants = field(default_factory=CostConstants)

    @property
    def mean_trial_minutes(self) -> float:
        if not self.files:
            return 0.0
        return math.fsum(sf.trial.duration_s for sf in self.files) / len(self.files) / 60.0

    def averages(self, zero_day_max_cost: Optional[float] = None) -> AverageCosts:
        malware = [sf for sf in self.files if sf.file.malicious]
        benign = [sf for sf in self.files if not sf.file.malicious]
        zero_day = [sf for sf in malware if sf.file.zero_day]
        public = [sf for sf in malware if not sf.file.zero_day]

        def mean(values: Iterable[float]) -> float:
            values = list(values)
            return math.fsum(values) / len(values) if values else 0.0

        if zero_day_max_cost is None:
            zd_costs = [sf.detect_cost for sf in zero_day]
        else:
            zd_costs = [
                malware_detection_cost(
                    sf.outcome, sf.file, sf.trial, self.constants, self.mode, zero_day_max_cost
                )
                for sf in zero_day
            ]
        return AverageCosts(
            malware_detect=mean(sf.detect_cost for sf in malware),
            benign_detect=mean(sf.detect_cost for sf in benign),
            malware_resource=mean(sf.resource_cost for sf in malware),
            benign_resource=mean(sf.resource_cost for sf in benign),
            zero_day_malware_detect=mean(zd_costs) if zero_day else None,
            public_malware_detect=mean(sf.detect_cost for sf in public) if public else None,
        )

    def breakdown(
        self, annual_cfg: AnnualConfig = AnnualConfig(), zero_day_max_cost: Optional[float] = None
    ) -> AnnualCostBreakdown:
        if zero_day_max_cost is None:
            zero_day_max_cost = annual_cfg.zero_day_max_cost
        return annualize(
            self.averages(zero_day_max_cost),
            self.ambient_rate_per_min,
            self.mean_trial_minutes,
            self.appliance_annual,
            annual_cfg,
            self.initial,
        )


def score_tool(
    tool_id: str,
    files: Mapping[str, FileSample],
    trials: Iterable[TrialRecord],
    outcomes: Mapping[tuple[str, str], DetectionOutcome],
    ambient: Optional[AmbientProfile],
    profile: ToolProfile = ToolProfile(),
    annual_cfg: AnnualConfig = AnnualConfig(),
    constants: CostConstants = CostConstants(),
    mode: CurveMode = CurveMode.CONSTRAINT_DERIVED,
) -> ToolScore:
    """Cost every scoreable trial of one tool. Aborted trials are skipped."""
    rate = ambient_rate(ambient, constants) if ambient is not None else 0.0
    scored = []
    for trial in trials:
        if trial.tool_id != tool_id or trial.aborted:
            continue
        file = files[trial.file_id]
        outcome = outcomes[trial.key]
        if file.malicious:
            detect = malware_detection_cost(outcome, file, trial, constants, mode)
        else:
            detect = benign_detection_cost(outcome, file, constants)
        resource = file_resource_cost(trial.resource_series, trial, rate, outcome, constants)
        scored.append(ScoredFile(file, trial, outcome, detect, resource))
    return ToolScore(
        tool_id=tool_id,
        files=scored,
        ambient_rate_per_min=rate,
        initial=initial_cost(profile.setup_hours, profile.appliance_total, annual_cfg, constants),
        appliance_annual=profile.appliance_annual,
        mode=CurveMode(mode),
        constants=constants,
    )


@dataclass(frozen=True)
class SweepResult:
    grid: tuple[float, ...]
    totals: dict[str, tuple[float, ...]]
    ml_tool: Optional[str] = None
    signature_tool: Optional[str] = None
    crossover: Optional[float] = None  # first grid point with ML total below signature total
    crossover_exact: Optional[float] = None  # interpolated; totals are affine in the maximum


def parse_grid(text: str) -> tuple[float, ...]:
    """Parse ``lo:hi:n`` into ``n`` evenly spaced values."""
    try:
        lo, hi, n = text.split(":")
        lo_f, hi_f, count = float(lo), float(hi), int(n)
    except ValueError as exc:
        raise CostModelError(f"grid must look like lo:hi:n, got {text!r}") from exc
    if count < 1:
        raise EmptyGrid("grid needs at least one point")
    if count == 1:
        return (lo_f,)
    step = (hi_f - lo_f) / (count - 1)
    return tuple(lo_f + i * step for i in range(count))


def sweep_zero_day_cost(
    scores: Mapping[str, ToolScore],
    grid: Sequence[float],
    annual_cfg: AnnualConfig,
    ml_tool: Optional[str] = None,
    signature_tool: Optional[str] = None,
) -> SweepResult:
    """Recompute each tool's total with zero-day malware capped at each grid maximum."""
    grid = tuple(float(g) for g in grid)
    if not grid:
        raise EmptyGrid("zero-day cost grid is empty")
    totals: dict[str, tuple[float, ...]] = {}
    for tool_id in sorted(scores):
        score = scores[tool_id]
        totals[tool_id] = tuple(score.breakdown(annual_cfg, zero_day_max_cost=m).total for m in grid)

    crossover = crossover_exact = None
    if ml_tool is not None and signature_tool is not None:
        diff = [a - b for a, b in zip(totals[ml_tool], totals[signature_tool])]
        for i, d in enumerate(diff):
            if d < 0:
                crossover = grid[i]
                if i == 0:
                    crossover_exact = grid[0]
                else:
                    # ML minus signature is affine in the zero-day maximum
                    d0 = diff[i - 1]
                    crossover_exact = grid[i - 1] + (grid[i] - grid[i - 1]) * d0 / (d0 - d)
                break
    return SweepResult(grid, totals, ml_tool, signature_tool, crossover, crossover_exact)

