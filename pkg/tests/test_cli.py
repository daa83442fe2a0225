import csv
import json

import numpy as np
import pytest
import yaml

from aabigan import cli, oracle
from aabigan.metrics import ExperimentResult, aggregate
from aabigan.scenario import LabeledSplit, ScenarioData

FAST = ["--epochs", "2", "--set", "train.batch_size=256"]


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "ring"
    assert cli.main(["train", "--out", str(out), *FAST]) == 0
    assert cli.main(["evaluate", str(out)]) == 0
    return out


def test_print_config_lists_defaults(capsys):
    assert cli.main(["train", "--print-config"]) == 0
    cfg = yaml.safe_load(capsys.readouterr().out)
    assert cfg["train"]["lr_ge"] == 1e-4 and cfg["train"]["lr_dd"] == 2.5e-5
    assert cfg["train"]["epochs"] == 200
    assert cfg["scenario"]["gamma_l"] == 0.05


def test_image_dataset_epochs_default(capsys):
    assert cli.main(["train", "--dataset", "mnist", "--print-config"]) == 0
    assert yaml.safe_load(capsys.readouterr().out)["train"]["epochs"] == 20


def test_flags_override_config_file(tmp_path, capsys):
    path = tmp_path / "c.yaml"
    path.write_text("scenario:\n  gamma_l: 0.1\ntrain:\n  batch_size: 64\n")
    assert cli.main(["train", "--config", str(path), "--gamma-l", "0.2", "--print-config"]) == 0
    cfg = yaml.safe_load(capsys.readouterr().out)
    assert cfg["scenario"]["gamma_l"] == 0.2 and cfg["train"]["batch_size"] == 64


def test_negative_gamma_rejected_with_field_path(capsys):
    assert cli.main(["train", "--gamma-l", "-0.1", "--print-config"]) == 1
    assert "scenario" in capsys.readouterr().err


def test_unknown_key_rejected(capsys):
    assert cli.main(["train", "--set", "train.learning_rate=3", "--print-config"]) == 1
    assert "train.learning_rate" in capsys.readouterr().err


def test_train_writes_self_describing_directory(trained_run):
    for name in ("effective_config.yaml", "scenario.json", "history.jsonl", "results.json", "scores.csv"):
        assert (trained_run / name).exists(), name
    assert (trained_run / "ckpt-2" / "manifest.json").exists()
    cfg = yaml.safe_load((trained_run / "effective_config.yaml").read_text())
    assert cfg["train"]["epochs"] == 2


def test_score_csv_matches_test_size(trained_run):
    meta = json.loads((trained_run / "scenario.json").read_text())
    with open(trained_run / "scores.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(meta["test_ids"])
    assert sorted(int(r["sample_id"]) for r in rows) == sorted(meta["test_ids"])


def test_reevaluation_is_deterministic(trained_run):
    first = (trained_run / "scores.csv").read_text()
    result = cli.cmd_evaluate(trained_run)
    assert (trained_run / "scores.csv").read_text() == first
    assert result.auroc == json.loads((trained_run / "results.json").read_text())["auroc"]


def test_rerun_reproduces_history(trained_run, tmp_path):
    other = tmp_path / "again"
    assert cli.main(["train", "--out", str(other), *FAST]) == 0
    assert (other / "history.jsonl").read_text() == (trained_run / "history.jsonl").read_text()


def test_existing_run_needs_force(trained_run, capsys):
    assert cli.main(["train", "--out", str(trained_run), *FAST]) == 1
    assert "--force" in capsys.readouterr().err


def test_missing_checkpoint_is_runtime_error(tmp_path, capsys):
    run = tmp_path / "empty"
    run.mkdir()
    cfg = cli.config_from_args(cli.build_parser().parse_args(["train", "--out", str(run)]))
    (run / cli.CONFIG_FILE).write_text(cli.config_to_yaml(cfg))
    assert cli.main(["evaluate", str(run)]) == 2
    assert "checkpoint" in capsys.readouterr().err


def test_missing_dataset_is_runtime_error(tmp_path, capsys):
    assert cli.main(["train", "--dataset", "thyroid", "--set", f"dataset.root={tmp_path}",
                     "--out", str(tmp_path / "r")]) == 2
    assert "not found" in capsys.readouterr().err


class Identity:
    def encode(self, x):
        return x

    def reconstruct(self, x):
        return x


def test_identity_model_scores_chance():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((40, 2)).astype(np.float32)
    y = np.array([0, 1] * 20)
    split = LabeledSplit(x, y, np.arange(40), y)
    data = ScenarioData(x[:4], x[:0], split, split)
    ev = cli.evaluate_model(Identity(), data)
    assert ev["split_auroc"]["recon_error"] == 0.5


def test_sweep_runs_cells_and_resumes(tmp_path, capsys):
    out = tmp_path / "sweep"
    args = ["sweep", "--out", str(out), *FAST, "--axis", "gamma_l=0.02,0.05", "--axis", "seed=0,1"]
    assert cli.main(args) == 0
    cells = sorted(p.name for p in (out / "cells").iterdir())
    assert len(cells) == 4
    assert all((out / "cells" / c / "results.json").exists() for c in cells)
    rows = [json.loads(line) for line in (out / "aggregate.jsonl").read_text().splitlines()]
    assert [r["gamma_l"] for r in rows] == [0.02, 0.05] and all(r["n"] == 2 for r in rows)
    assert (out / "aggregate.csv").exists()
    stamp = (out / "cells" / cells[0] / "results.json").stat().st_mtime_ns
    capsys.readouterr()
    assert cli.main(args) == 0
    assert "skipped: 4" in capsys.readouterr().out
    assert (out / "cells" / cells[0] / "results.json").stat().st_mtime_ns == stamp


def test_sweep_class_pairs_enumerate_90_cells(capsys):
    assert cli.main(["sweep", "--dataset", "mnist", "--axis", "class_pair=all", "--dry-run"]) == 0
    assert capsys.readouterr().out.strip().endswith("90 cells")


def test_sweep_rejects_unknown_axis(capsys):
    assert cli.main(["sweep", "--out", "x", "--axis", "colour=red", "--dry-run"]) == 1


def test_verify_passes_and_emits_json(tmp_path, capsys):
    path = tmp_path / "verify.json"
    assert cli.main(["verify", "--instances", "20", "--json", str(path)]) == 0
    report = json.loads(path.read_text())
    assert report["passed"] is True
    assert {c["name"] for c in report["checks"]} >= {"pearson_chi2.examples", "chi2_identity"}


def test_verify_fails_on_injected_bug(monkeypatch, capsys):
    real = oracle.pearson_chi2
    monkeypatch.setattr(oracle, "pearson_chi2", lambda p, q: -real(p, q))
    assert cli.main(["verify", "--instances", "10", "--format", "json"]) == 3
    report = json.loads(capsys.readouterr().out)
    failing = [c["name"] for c in report["checks"] if not c["passed"]]
    assert any(name.startswith("pearson_chi2") for name in failing)


def test_report_single_run(trained_run, tmp_path, capsys):
    out = tmp_path / "rep"
    assert cli.main(["report", str(trained_run), "--out", str(out)]) == 0
    with open(out / "report.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert list(out.glob("recon_boxplot_*.png"))
    assert (out / "report.md").read_text().count("\n") == 3


def test_report_without_plots(trained_run, tmp_path):
    out = tmp_path / "rep"
    assert cli.main(["report", str(trained_run), "--out", str(out), "--no-plot"]) == 0
    assert not list(out.glob("*.png"))


def test_report_grouping_matches_aggregate(tmp_path):
    results = []
    for i, (g, a) in enumerate([(0.01, 0.9), (0.01, 0.8), (0.05, 0.7)]):
        d = tmp_path / f"r{i}"
        d.mkdir()
        r = ExperimentResult(cli.ScenarioSpec(gamma_l=g), a, "recon_error", seed=i, dataset="ring")
        (d / cli.RESULTS_FILE).write_text(json.dumps(r.to_dict()))
        results.append(r)
    summary = cli.cmd_report([tmp_path], tmp_path / "out", ("dataset", "gamma_l"), plot=False)
    assert summary["rows"] == [rep.to_dict() for rep in aggregate(results, ("dataset", "gamma_l"))]


def test_report_empty_input(tmp_path, capsys):
    assert cli.main(["report", "--out", str(tmp_path / "o")]) == 1
    assert cli.main(["report", str(tmp_path), "--out", str(tmp_path / "o")]) == 1


def test_no_command_is_usage_error():
    assert cli.main([]) == 1
