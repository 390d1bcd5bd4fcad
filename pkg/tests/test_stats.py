from __future__ import annotations

import itertools
import random

import pytest

from detector_eval.model import DetectionOutcome, FileSample, FileType, Label, Phase
from detector_eval.stats import (
    PUBLIC_PE,
    ZERO_DAY_PE,
    ConfusionCounts,
    EmptyCohort,
    confusion_counts,
    confusion_stats,
    f1_score,
    filetype_display,
    lower_median,
    median_ttd,
    per_filetype_recall,
    unique_detections,
    zero_day_comparison,
)


def _files():
    return {
        "m1": FileSample("m1", "m1", FileType.PE, Label.MALICIOUS),
        "m2": FileSample("m2", "m2", FileType.PE, Label.MALICIOUS, zero_day=True),
        "m3": FileSample("m3", "m3", FileType.PDF, Label.MALICIOUS),
        "b1": FileSample("b1", "b1", FileType.TEXT, Label.BENIGN),
        "b2": FileSample("b2", "b2", FileType.PE, Label.BENIGN),
    }


def hit(tool, fid, ttd=1.0):
    return DetectionOutcome(tool, fid, Phase.PRE_EXECUTION, ttd)


def miss(tool, fid):
    return DetectionOutcome(tool, fid, Phase.NEVER)


def test_counts_example():
    c = ConfusionCounts(tp=3, fp=1, tn=5, fn=1)
    assert c.recall == pytest.approx(0.75)
    assert c.precision == pytest.approx(0.75)
    assert c.f1 == pytest.approx(0.75)
    assert c.total == 10


def test_absent_metrics():
    empty = ConfusionCounts(0, 0, 0, 0)
    assert empty.recall is None and empty.precision is None and empty.f1 is None
    with pytest.raises(EmptyCohort):
        empty.require_recall()
    assert ConfusionCounts(0, 0, 4, 2).precision is None
    assert ConfusionCounts(0, 0, 4, 2).f1 == 0.0


def test_f1_score_matches_counts():
    c = ConfusionCounts(30, 7, 50, 11)
    assert f1_score(c.precision, c.recall) == pytest.approx(c.f1)
    assert f1_score(0.0, 0.0) == 0.0


def test_confusion_over_outcomes():
    files = _files()
    outs = [hit("a", "m1"), miss("a", "m2"), hit("a", "m3"), hit("a", "b1"), miss("a", "b2")]
    c = confusion_counts(outs, files)
    assert (c.tp, c.fp, c.tn, c.fn) == (2, 1, 1, 1)
    assert confusion_counts(outs, files, PUBLIC_PE) == ConfusionCounts(1, 0, 0, 0)
    assert confusion_stats(outs, files, ZERO_DAY_PE).recall == 0.0
    with pytest.raises(ValueError):
        confusion_counts([hit("a", "zz")], files)


def test_lower_median():
    assert lower_median([7, 1, 5, 3]) == 3
    assert lower_median([4.0]) == 4.0
    assert lower_median([3, 1, 2]) == 2
    assert lower_median([]) is None


def test_median_ttd_uses_detected_only():
    outs = [hit("a", "m1", 1), hit("a", "m2", 3), hit("a", "m3", 5), hit("a", "b1", 7), miss("a", "b2")]
    assert median_ttd(outs) == 3
    assert median_ttd(outs, _files(), PUBLIC_PE) == 1
    assert median_ttd([miss("a", "m1")]) is None
    with pytest.raises(ValueError):
        median_ttd(outs, cohort=PUBLIC_PE)


def test_per_filetype_recall_rows():
    files = _files()
    outs = [hit("a", "m1"), miss("a", "m2"), hit("a", "m3"), miss("b", "m1"), miss("b", "m2"), miss("b", "m3")]
    ft = per_filetype_recall(outs, files, ["a", "b"])
    assert ft.rows == ((FileType.PDF, 1), (FileType.PE, 2))
    assert ft.recall["a"][FileType.PE] == 0.5
    assert ft.recall["b"][FileType.PDF] == 0.0
    assert ft.row_label(FileType.PE) == "PE (2)"
    assert filetype_display(FileType.MSOFFICE) == "MS-Office"
    assert filetype_display(FileType.SOURCECODE) == "Source-code"


def test_unique_detections_brute_force():
    rng = random.Random(4)
    tools = ["a", "b", "c", "d"]
    items = range(60)
    detected = {t: {i for i in items if rng.random() < 0.4} for t in tools}
    expected = {
        t: sum(1 for i in items if i in detected[t] and all(i not in detected[o] for o in tools if o != t))
        for t in tools
    }
    assert unique_detections(detected) == expected


def test_zero_day_comparison_cells():
    files = _files()
    outs = [hit("a", "m1", 2.0), hit("a", "m2", 4.0), hit("b", "m1", 1.0), miss("b", "m2")]
    zd = zero_day_comparison(outs, files, ["a", "b"])
    assert zd.cohorts == ("Zero-day PEs", "Public PEs")
    assert zd.cell("a", "Zero-day PEs").recall == 1.0
    assert zd.cell("a", "Zero-day PEs").unique == 1
    assert zd.cell("b", "Zero-day PEs").recall == 0.0
    assert zd.cell("b", "Public PEs").median_ttd == 1.0
    assert zd.cell("a", "Public PEs").unique == 0
    assert zd.cell("a", "Public PEs").n_malware == 1


def test_cohort_counts_add_up():
    files = _files()
    outs = [hit("a", f) if i % 2 else miss("a", f) for i, f in enumerate(files)]
    whole = confusion_counts(outs, files)
    parts = [confusion_counts(outs, files, lambda f, ft=ft: f.file_type is ft) for ft in FileType]
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    assert total == whole


def test_every_subset_has_valid_f1():
    files = _files()
    fids = list(files)
    for mask in itertools.product([False, True], repeat=len(fids)):
        outs = [hit("a", f) if m else miss("a", f) for f, m in zip(fids, mask)]
        f1 = confusion_stats(outs, files).f1
        assert f1 is None or 0.0 <= f1 <= 1.0
