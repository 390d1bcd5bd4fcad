from __future__ import annotations

import math

import pytest
from scipy import integrate, optimize

from detector_eval.costmodel import (
    TABLE2_COST_ROWS,
    AnnualConfig,
    AttackCostCurve,
    AverageCosts,
    CostConstants,
    CostModelError,
    CurveMode,
    EmptyGrid,
    LabelMismatch,
    NegativeRemainingTime,
    NonpositiveTe,
    ToolProfile,
    ambient_rate,
    annualize,
    attack_cost,
    attack_cost_params,
    benign_detection_cost,
    file_resource_cost,
    initial_cost,
    malware_detection_cost,
    parse_grid,
    score_tool,
    sweep_zero_day_cost,
)
from detector_eval.model import (
    AmbientProfile,
    DetectionOutcome,
    FileSample,
    FileType,
    Label,
    Phase,
    ResourceSample,
    TrialRecord,
)

MAL = FileSample("m1", "m1.exe", FileType.PE, Label.MALICIOUS)
BEN = FileSample("b1", "b1.txt", FileType.TEXT, Label.BENIGN)
TRIAL = TrialRecord("t", "m1", 0.0, 90.0, 150.0)
BTRIAL = TrialRecord("t", "b1", 0.0, 90.0, 150.0)


def outcome(phase, ttd=None, file_id="m1"):
    return DetectionOutcome("t", file_id, phase, ttd)


# -- curve parameters -------------------------------------------------------


def test_paper_printed_params_te90():
    alpha, beta = attack_cost_params(90.0, CurveMode.PAPER_PRINTED)
    assert alpha == pytest.approx(34 / 9)
    assert beta == pytest.approx((25 / 9) ** 2 / 60)
    assert beta == pytest.approx(0.12860, abs=5e-6)


def test_constraint_derived_params_te90():
    alpha, beta = attack_cost_params(90.0)
    assert alpha == pytest.approx(7.25)
    assert beta == pytest.approx(2.5 / 60)


def test_constraint_derived_limit_at_zero():
    alpha, beta = attack_cost_params(1e-9)
    assert alpha == pytest.approx(2.0)
    assert beta == pytest.approx(1 / 60)


def test_nonpositive_te_rejected():
    for te in (0.0, -3.0):
        with pytest.raises(NonpositiveTe):
            attack_cost_params(te)
    with pytest.raises(NonpositiveTe):
        AttackCostCurve.for_trial(10.0, 10.0)


def _third_derivative_roots(curve, lo, hi):
    """Roots of f''' found by root-finding on central finite differences of the curve itself."""
    h = 0.5

    def f3(t):
        return (curve(t + 2 * h) - 2 * curve(t + h) + 2 * curve(t - h) - curve(t - 2 * h)) / (2 * h**3)

    grid = [lo + i * 0.25 for i in range(int((hi - lo) / 0.25))]
    roots = []
    for a, b in zip(grid, grid[1:]):
        if f3(a) * f3(b) < 0:
            roots.append(optimize.brentq(f3, a, b, xtol=1e-6))
    return roots


def _second_derivative_root(curve, lo, hi):
    h = 0.5

    def f2(t):
        return (curve(t + h) - 2 * curve(t) + curve(t - h)) / h**2

    return optimize.brentq(f2, lo, hi, xtol=1e-6)


@pytest.mark.parametrize("te", [10.0, 60.0, 90.0, 300.0])
def test_constraint_derived_satisfies_constraints(te):
    curve = AttackCostCurve.for_trial(0.0, te)
    roots = _third_derivative_roots(curve, 2.0, te + 30.0)
    assert roots and abs(roots[0] - te) <= 0.5
    assert abs(_second_derivative_root(curve, te + 30.0, te + 90.0) - (te + 60.0)) <= 0.5


def test_paper_printed_misses_constraints_te90():
    curve = AttackCostCurve.for_trial(0.0, 90.0, CurveMode.PAPER_PRINTED)
    inflection = _second_derivative_root(curve, 5.0, 60.0)
    assert inflection == pytest.approx(21.6, abs=0.2)


# -- curve values -------------------------------------------------------------

# f(t) for te=90, constraint-derived, from quadrature of the density.
CURVE_ORACLE_TE90 = [
    (30.0, 0.20259496335922278),
    (90.0, 70.82100180199475),
    (150.0, 395.75724890752434),
    (300.0, 958.2715134082911),
    (600.0, 999.9913860649539),
]


@pytest.mark.parametrize("t, expected", CURVE_ORACLE_TE90)
def test_curve_values_match_quadrature(t, expected):
    curve = AttackCostCurve.for_trial(0.0, 90.0)
    assert curve(t) == pytest.approx(expected, rel=1e-10)


def test_curve_at_shift_and_asymptote():
    curve = AttackCostCurve.for_trial(5.0, 95.0)
    assert curve(5.0) == 0.0
    assert curve(-100.0) == 0.0
    assert curve(5.0 + 50 * (90 + 60)) == pytest.approx(1000.0, abs=1.0)
    assert attack_cost(95.0, curve) == curve(95.0)


def test_normalizer_integrates_density_to_one():
    curve = AttackCostCurve.for_trial(0.0, 90.0)
    total, _ = integrate.quad(lambda s: curve.normalizer * s ** (curve.alpha - 1) * math.exp(-curve.beta * s), 0, math.inf)
    assert total == pytest.approx(1.0, rel=1e-9)


# -- detection costs ----------------------------------------------------------


def test_constants_match_reference_figures():
    c = CostConstants()
    assert c.triage == pytest.approx(35.05)
    assert c.ir == pytest.approx(140.0)
    assert c.hdd_rate == pytest.approx(0.05 / 3 / 30.5 / 24)


def test_never_costs_max_exactly():
    assert malware_detection_cost(outcome(Phase.NEVER), MAL, TRIAL) == 1000.0


def test_pre_execution_at_shift_costs_nothing():
    assert malware_detection_cost(outcome(Phase.PRE_EXECUTION, 0.0), MAL, TRIAL) == 0.0


def test_in_window_adds_response():
    curve = AttackCostCurve.for_trial(0.0, 90.0)
    cost = malware_detection_cost(outcome(Phase.IN_WINDOW, 100.0), MAL, TRIAL)
    assert cost == pytest.approx(curve(100.0) + 175.05)


def test_post_close_formula():
    curve = AttackCostCurve.for_trial(0.0, 90.0)
    cost = malware_detection_cost(outcome(Phase.POST_CLOSE, 400.0), MAL, TRIAL)
    assert cost == pytest.approx((curve(150.0) + 824.95) / 2 + 175.05)


def test_label_mismatch():
    with pytest.raises(LabelMismatch):
        malware_detection_cost(outcome(Phase.NEVER, file_id="b1"), BEN, BTRIAL)
    with pytest.raises(LabelMismatch):
        benign_detection_cost(outcome(Phase.NEVER), MAL)
    with pytest.raises(CostModelError):
        malware_detection_cost(outcome(Phase.NEVER, file_id="zz"), MAL, TRIAL)


@pytest.mark.parametrize(
    "phase, ttd, expected",
    [(Phase.IN_WINDOW, 100.0, 35.05), (Phase.NEVER, None, 0.0), (Phase.POST_CLOSE, 500.0, 35.05)],
)
def test_benign_cost(phase, ttd, expected):
    assert benign_detection_cost(outcome(phase, ttd, "b1"), BEN) == pytest.approx(expected)


# -- resource costs -----------------------------------------------------------


def test_resource_cost_cpu_only():
    series = [ResourceSample(float(t), 0.5) for t in range(90)]
    cost = file_resource_cost(series, TRIAL, 0.0, outcome(Phase.PRE_EXECUTION, 5.0))
    assert cost == pytest.approx(0.5 * (0.02444 / 3) * (90 / 3600))
    assert cost == pytest.approx(0.0001018, abs=5e-8)


def test_resource_cost_imputed_when_missing():
    trial = TrialRecord("t", "m1", 0.0, 60.0, 180.0)
    assert file_resource_cost(None, trial, 0.001, outcome(Phase.NEVER)) == pytest.approx(0.003)
    assert file_resource_cost([], trial, 0.001, outcome(Phase.NEVER)) == pytest.approx(0.003)


def test_resource_cost_zero():
    series = [ResourceSample(float(t), 0.0) for t in range(90)]
    assert file_resource_cost(series, TRIAL, 0.0, outcome(Phase.NEVER)) == 0.0


def test_resource_cost_ignores_post_execution_samples():
    before = [ResourceSample(float(t), 0.2) for t in range(90)]
    after = [ResourceSample(float(t), 1.0, 8 * 2**30, 1e9, 1e9) for t in range(90, 150)]
    o = outcome(Phase.IN_WINDOW, 120.0)
    assert file_resource_cost(before + after, TRIAL, 0.01, o) == pytest.approx(
        file_resource_cost(before, TRIAL, 0.01, o)
    )


def test_resource_cost_hdd_and_ambient_tail():
    # one sample per 2 s, 1 GiB moved per interval; ambient 0.06 $/min from execution to alert at 120 s
    series = [ResourceSample(float(t), 0.0, 0.0, 2**29, 2**29) for t in range(0, 90, 2)]
    c = CostConstants()
    expected = 45 * c.hdd_rate * (2 / 3600) + 0.06 * 30 / 60
    assert file_resource_cost(series, TRIAL, 0.06, outcome(Phase.IN_WINDOW, 120.0)) == pytest.approx(expected)


def test_ambient_rate_examples():
    assert ambient_rate(AmbientProfile("t")) == 0.0
    assert ambient_rate(AmbientProfile("t", 300, 1.0)) == pytest.approx((0.02444 / 3) / 60)
    assert ambient_rate(AmbientProfile("t", 300, 1.0)) == pytest.approx(0.0001358, abs=5e-8)
    base = AmbientProfile("t", 300, 0.1, 2**30, 1e5, 2e5)
    doubled = AmbientProfile("t", 300, 0.2, 2**31, 2e5, 4e5)
    assert ambient_rate(doubled) == pytest.approx(2 * ambient_rate(base))


@pytest.mark.parametrize("hours, appliance, expected", [(12, 20_000, 282.0), (8, 0, 0.0), (0, 10_000, 1.0)])
def test_initial_cost(hours, appliance, expected):
    assert initial_cost(hours, appliance) == pytest.approx(expected)


# -- annualization ------------------------------------------------------------


def test_annual_counts():
    cfg = AnnualConfig()
    assert cfg.malware_per_year == pytest.approx(580)
    assert cfg.benign_per_year == pytest.approx(49_420)


def test_annualize_cross_foot_reference_columns():
    b = annualize(AverageCosts(malware_detect=353.252, benign_detect=0.007711))
    assert abs(b.annual_malware_detect - 204_886) <= 1
    assert abs(b.annual_benign_detect - 381) <= 1


def test_annualize_all_zero():
    b = annualize(AverageCosts())
    assert all(v == 0 for _, v in b.rows())


def test_breakdown_rows_and_total():
    b = annualize(
        AverageCosts(1.0, 0.1, 0.01, 0.001), ambient_rate_per_min=0.001, mean_trial_minutes=2.5,
        appliance_annual=10.0, initial=39.0,
    )
    labels = [label for label, _ in b.rows()]
    assert labels == list(TABLE2_COST_ROWS)
    assert b.total == pytest.approx(b.initial + b.annual_resource + b.annual_detect)
    assert b.annual_ambient_resource == pytest.approx(0.001 * (525_600 - 50_000 * 2.5))


def test_annualize_negative_remaining_time():
    with pytest.raises(NegativeRemainingTime):
        annualize(AverageCosts(), mean_trial_minutes=11.0)


def test_annualize_zero_day_split_needs_averages():
    cfg = AnnualConfig(zero_day_fraction_of_malware=0.1)
    with pytest.raises(CostModelError):
        annualize(AverageCosts(malware_detect=5.0), annual_cfg=cfg)
    b = annualize(AverageCosts(zero_day_malware_detect=1000.0, public_malware_detect=100.0), annual_cfg=cfg)
    assert b.annual_malware_detect == pytest.approx(580 * (0.1 * 1000 + 0.9 * 100))


# -- scoring and sweep --------------------------------------------------------


def _tiny_score(zero_day_detected: bool):
    files = {
        "z": FileSample("z", "z.exe", FileType.PE, Label.MALICIOUS, zero_day=True),
        "p": FileSample("p", "p.exe", FileType.PE, Label.MALICIOUS),
        "b": FileSample("b", "b.txt", FileType.TEXT, Label.BENIGN),
    }
    trials = [TrialRecord("tool", fid, 0.0, 90.0, 150.0) for fid in files]
    outcomes = {
        ("tool", "z"): DetectionOutcome("tool", "z", Phase.PRE_EXECUTION if zero_day_detected else Phase.NEVER,
                                        5.0 if zero_day_detected else None),
        ("tool", "p"): DetectionOutcome("tool", "p", Phase.PRE_EXECUTION, 5.0),
        ("tool", "b"): DetectionOutcome("tool", "b", Phase.NEVER),
    }
    return score_tool("tool", files, trials, outcomes, AmbientProfile("tool", 300, 0.01), ToolProfile(10, 0, 0))


def test_score_tool_skips_aborted_and_other_tools():
    files = {"p": FileSample("p", "p.exe", FileType.PE, Label.MALICIOUS)}
    trials = [
        TrialRecord("tool", "p", 0.0, 90.0, 150.0),
        TrialRecord("other", "p", 0.0, 90.0, 150.0),
        TrialRecord("tool", "p", math.nan, math.nan, math.nan, aborted=True),
    ]
    outcomes = {("tool", "p"): DetectionOutcome("tool", "p", Phase.NEVER)}
    score = score_tool("tool", files, trials, outcomes, None)
    assert len(score.files) == 1
    assert score.averages().malware_detect == 1000.0
    assert score.initial == 0.0


def test_sweep_noop_point_and_zero_fraction():
    score = _tiny_score(zero_day_detected=False)
    cfg = AnnualConfig(zero_day_fraction_of_malware=0.01)
    sweep = sweep_zero_day_cost({"tool": score}, [1000.0, 5000.0], cfg)
    assert sweep.totals["tool"][0] == pytest.approx(score.breakdown(cfg).total)
    assert sweep.totals["tool"][1] > sweep.totals["tool"][0]
    flat = sweep_zero_day_cost({"tool": score}, [1000.0, 5000.0, 9000.0], AnnualConfig())
    assert len(set(flat.totals["tool"])) == 1


def test_sweep_crossover_interpolated():
    cfg = AnnualConfig(zero_day_fraction_of_malware=0.5)
    scores = {"ml": _tiny_score(True), "sig": _tiny_score(False)}
    # give the signature tool a head start so the crossover is interior
    grid = parse_grid("0:10000:11")
    res = sweep_zero_day_cost(scores, grid, cfg, "ml", "sig")
    diff = [a - b for a, b in zip(res.totals["ml"], res.totals["sig"])]
    if diff[0] < 0:
        assert res.crossover == grid[0]
    else:
        assert res.crossover is not None
        assert res.crossover_exact <= res.crossover


def test_parse_grid():
    assert parse_grid("0:10:3") == (0.0, 5.0, 10.0)
    assert parse_grid("7:9:1") == (7.0,)
    with pytest.raises(EmptyGrid):
        parse_grid("0:1:0")
    with pytest.raises(CostModelError):
        parse_grid("0-1-2")
    with pytest.raises(EmptyGrid):
        sweep_zero_day_cost({}, [], AnnualConfig())
