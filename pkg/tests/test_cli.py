from __future__ import annotations

import pytest

from detector_eval.cli import main

SMALL = """
seed = 5
workers = 3
trials_per_worker = 4
tools = ["ml", "signature"]

[corpus]
n_files = 40
"""

OUTPUTS = (
    "files.csv", "trials.csv", "alerts.csv", "ambient.csv", "resources.jsonl", "metrics.jsonl",
    "breakdown.csv", "table1.csv", "table2.csv", "table3.csv", "table4.csv",
)


def _pipeline(tmp_path, name):
    cfg = tmp_path / "small.toml"
    cfg.write_text(SMALL, encoding="utf-8")
    out = tmp_path / name
    for command in ("run", "score", "stats"):
        assert main([command, "--config", str(cfg), "--out", str(out)]) == 0
    return out


def test_run_score_stats_reproducible(tmp_path, capsys):
    a = _pipeline(tmp_path, "a")
    b = _pipeline(tmp_path, "b")
    for name in OUTPUTS:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    capsys.readouterr()


def test_sweep_report_validate(tmp_path, capsys):
    out = _pipeline(tmp_path, "o")
    cfg = str(tmp_path / "small.toml")
    assert main(["validate", "--config", cfg, "--out", str(out)]) == 0
    assert main(["sweep", "--config", cfg, "--out", str(out), "--grid", "0:50000:11"]) == 0
    assert len((out / "sweep.csv").read_text(encoding="utf-8").splitlines()) == 12
    report = tmp_path / "report"
    assert main(["report", "--config", cfg, "--data", str(out), "--out", str(report)]) == 0
    for name in ("table1.csv", "table2.csv", "table3.csv", "table4.csv", "summary.txt", "sweep.csv"):
        assert (report / name).exists()
    assert "Detector evaluation summary" in capsys.readouterr().out


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["score", "--out", str(tmp_path / "missing")]) == 2
    assert "error" in capsys.readouterr().err
    bad = tmp_path / "bad.toml"
    bad.write_text("workers = 0\n", encoding="utf-8")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    with pytest.raises(SystemExit):
        main(["frobnicate"])
    with pytest.raises(SystemExit):
        main(["run", "--seed", "-3"])


def test_mode_and_zero_day_overrides(tmp_path):
    out = _pipeline(tmp_path, "m")
    cfg = str(tmp_path / "small.toml")
    base = (out / "breakdown.csv").read_bytes()
    assert main(["score", "--config", cfg, "--out", str(out), "--mode", "paper-printed"]) == 0
    assert (out / "breakdown.csv").read_bytes() != base
    assert main(["score", "--config", cfg, "--out", str(out), "--zero-day-fraction", "0.01",
                 "--zero-day-max", "40000"]) == 0
