import csv
import json

import pytest
import yaml

from remtime.cli import main
from remtime.synth import Pattern, generate_rows, rows_to_csv

from conftest import CLAIMS_CSV


def write_config(tmp_path, log_path, methods, **extra):
    doc = {
        "dataset": "demo",
        "log": {"path": str(log_path),
                "columns": {"case_id": "case_id", "activity": "activity", "timestamp": "timestamp"}},
        "seed": 7,
        "cv_folds": 2,
        "methods": methods,
        **extra,
    }
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


@pytest.fixture
def claims_config(tmp_path):
    doc = {
        "dataset": "claims",
        "log": {"path": str(CLAIMS_CSV), "columns": {"case_id": "Case", "activity": "Activity", "timestamp": "Time"},
                "timestamp_format": "%d/%m/%Y %H:%M:%S",
                "attributes": [{"name": "Channel", "kind": "categorical", "static": True},
                               {"name": "Age", "kind": "numeric", "static": True},
                               {"name": "Resource", "kind": "categorical"},
                               {"name": "Cost", "kind": "numeric"}]},
        "seed": 1,
        "methods": ["mean_baseline"],
    }
    path = tmp_path / "claims.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


@pytest.fixture
def synth_log(tmp_path):
    path = tmp_path / "log.csv"
    rows = generate_rows(12, [Pattern(tuple("ABC"), 100), Pattern(tuple("DEF"), 1000)], seed=3)
    path.write_text(rows_to_csv(rows))
    return path


def test_stats_csv_and_json_agree(claims_config, tmp_path, capsys):
    assert main(["stats", str(claims_config), "--output", str(tmp_path / "s.csv")]) == 0
    assert main(["stats", str(claims_config), "--format", "json", "--output", str(tmp_path / "s.json")]) == 0
    row = next(csv.DictReader(open(tmp_path / "s.csv")))
    js = json.loads((tmp_path / "s.json").read_text())
    assert int(row["n_cases"]) == js["n_cases"] == 2
    assert {k: str(v) for k, v in js.items()} == row


def test_stats_missing_log_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, tmp_path / "nope.csv", ["mean_baseline"])
    assert main(["stats", str(cfg)]) == 2
    assert "nope.csv" in capsys.readouterr().err


def test_missing_config_exits_2(tmp_path):
    assert main(["stats", str(tmp_path / "absent.yaml")]) == 2


def test_invalid_descriptor_exits_2(tmp_path, synth_log, capsys):
    cfg = write_config(tmp_path, synth_log, ["zero_lstm_gbt"])
    assert main(["run", str(cfg)]) == 2
    assert "invalid method descriptor" in capsys.readouterr().err


def test_duplicate_descriptor_exits_2(tmp_path, synth_log):
    cfg = write_config(tmp_path, synth_log, ["mean_baseline", "mean_baseline"])
    assert main(["run", str(cfg)]) == 2


def test_missing_seed_exits_2(tmp_path, synth_log):
    cfg = write_config(tmp_path, synth_log, ["mean_baseline"])
    doc = yaml.safe_load(cfg.read_text())
    del doc["seed"]
    cfg.write_text(yaml.safe_dump(doc))
    assert main(["run", str(cfg)]) == 2


def test_run_writes_outputs(tmp_path, synth_log):
    cfg = write_config(tmp_path, synth_log, ["mean_baseline", "transition_system"])
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--output", str(out)]) == 0
    with open(out / "results.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["dataset", "method", "bucketing", "encoding", "predictor", "k", "n_prefixes",
                             "mae_seconds"]
    assert {r["method"] for r in rows} == {"mean_baseline", "transition_system"}
    summary = list(csv.DictReader(open(out / "summary.csv")))
    assert [r["method"] for r in summary] == ["mean_baseline", "transition_system"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["split"]["n_test_cases"] == 2
    assert (out / "models" / "transition_system" / "descriptor.json").exists()


def test_run_timeout_marks_method(tmp_path, synth_log):
    cfg = write_config(tmp_path, synth_log, ["mean_baseline", "single_aggregation_gbt"])
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--output", str(out), "--timeout", "0"]) == 1
    summary = {r["method"]: r for r in csv.DictReader(open(out / "summary.csv"))}
    assert summary["single_aggregation_gbt"]["weighted_mae"] == "timeout"


def write_summary(path, dataset, values):
    path.mkdir(parents=True, exist_ok=True)
    lines = ["dataset,method,weighted_mae,weighted_std,normalized_mae,mean_rank"]
    lines += [f"{dataset},{m},{v},0,0,0" for m, v in values.items()]
    (path / "summary.csv").write_text("\n".join(lines) + "\n")


def test_report_runs_friedman(tmp_path, capsys):
    write_summary(tmp_path / "r" / "d1", "d1", {"a": 1.0, "b": 2.0, "c": 3.0})
    write_summary(tmp_path / "r" / "d2", "d2", {"a": 1.0, "b": 3.0, "c": 2.0})
    assert main(["report", str(tmp_path / "r")]) == 0
    text = (tmp_path / "r" / "report.md").read_text()
    assert "chi2_F" in text and "df = 2" in text


def test_report_skips_friedman_with_two_methods(tmp_path):
    write_summary(tmp_path / "r" / "d1", "d1", {"a": 1.0, "b": 2.0})
    assert main(["report", str(tmp_path / "r")]) == 1
    assert "Skipped" in (tmp_path / "r" / "report.md").read_text()


def test_report_duplicate_rows_exit_2(tmp_path, capsys):
    write_summary(tmp_path / "r" / "x", "d1", {"a": 1.0, "b": 2.0, "c": 3.0})
    write_summary(tmp_path / "r" / "y", "d1", {"a": 1.0})
    assert main(["report", str(tmp_path / "r")]) == 2
    assert "duplicate descriptor" in capsys.readouterr().err


def test_report_empty_dir_exits_2(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["report", str(tmp_path / "empty")]) == 2


def test_synth_writes_runnable_config(tmp_path):
    log, cfg = tmp_path / "s.csv", tmp_path / "s.yaml"
    assert main(["synth", "--cases", "15", "--pattern", "A,B,C:60", "--seed", "2",
                 "--out", str(log), "--config-out", str(cfg)]) == 0
    assert main(["run", str(cfg), "--output", str(tmp_path / "o")]) == 0
