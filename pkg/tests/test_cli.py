"""Command-line entry point: exit codes, manifests and a desk-scale end-to-end run"""

import json

import pandas as pd
import pytest

from src import cli
from src.core.exceptions import TrainingError
from src.core.models import ExperimentConfig, SolarSearchSpace, TrainConfig

from conftest import tiny_synth_config


@pytest.fixture
def synth_config(tmp_path):
    path = tmp_path / "synth.json"
    path.write_text(tiny_synth_config().model_dump_json(), encoding="utf-8")
    return path


@pytest.fixture
def experiment_config(tmp_path):
    experiment = ExperimentConfig(
        train=TrainConfig(max_epochs=5),
        cloud_stride=4,
        solar_trials=1,
        solar_patience=3,
        solar_search={"mlp": SolarSearchSpace(kind="mlp", epochs=(100, 100), units=[4])},
    )
    path = tmp_path / "experiment.json"
    path.write_text(experiment.model_dump_json(), encoding="utf-8")
    return path


@pytest.fixture
def dataset(tmp_path, synth_config):
    out = tmp_path / "data"
    assert cli.main(["generate", "--config", str(synth_config), "--out", str(out)]) == cli.EXIT_OK
    return out


def test_generate_is_reproducible(tmp_path, synth_config, dataset):
    again = tmp_path / "again"
    assert cli.main(["generate", "--config", str(synth_config), "--out", str(again)]) == 0

    first = json.loads((dataset / "run_manifest.json").read_text())
    second = json.loads((again / "run_manifest.json").read_text())
    assert first["command"] == "generate" and first["seed"] == 3
    assert first["outputs"] == second["outputs"]
    assert any(key.startswith("frames/") for key in first["outputs"])
    assert (dataset / "run.log").exists()


def test_generate_seed_override_changes_data(tmp_path, synth_config, dataset):
    other = tmp_path / "other"
    assert cli.main(["generate", "--config", str(synth_config), "--seed", "99", "--out", str(other)]) == 0
    assert (other / "power.csv").read_bytes() != (dataset / "power.csv").read_bytes()


def test_configuration_errors_exit_2(tmp_path):
    assert cli.main(["generate", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path / "x")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"n_sites": 0}', encoding="utf-8")
    assert cli.main(["generate", "--config", str(bad), "--out", str(tmp_path / "y")]) == 2
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    assert cli.main(["generate", "--config", str(broken), "--out", str(tmp_path / "z")]) == 2
    blobless = tmp_path / "blobless.json"
    blobless.write_text('{"blob_count": 0, "clear_fraction": 0.5}', encoding="utf-8")
    assert cli.main(["generate", "--config", str(blobless), "--out", str(tmp_path / "w")]) == 2
    assert not (tmp_path / "w" / "power.csv").exists()


def test_missing_artifacts_exit_4(tmp_path, dataset):
    assert cli.main(["train-solar", "--data", str(tmp_path / "absent"), "--net", "mlp",
                     "--out", str(tmp_path / "ckpt")]) == 4
    assert cli.main(["evaluate", "--data", str(dataset), "--checkpoints", str(tmp_path / "empty"),
                     "--nets", "mlp", "--out", str(tmp_path / "report")]) == 4


def test_unknown_evaluation_inputs_exit_2(tmp_path, dataset):
    assert cli.main(["evaluate", "--data", str(dataset), "--checkpoints", str(tmp_path),
                     "--nets", "transformer", "--out", str(tmp_path / "r1")]) == 2
    assert cli.main(["evaluate", "--data", str(dataset), "--checkpoints", str(tmp_path),
                     "--scenarios", "sunny_clouds", "--out", str(tmp_path / "r2")]) == 2


def test_training_failure_exits_3(tmp_path, dataset, monkeypatch):
    def fail(*args, **kwargs):
        raise TrainingError("site0: non-finite loss")

    monkeypatch.setattr(cli, "train_fleet", fail)
    assert cli.main(["train-solar", "--data", str(dataset), "--net", "mlp", "--out", str(tmp_path / "c")]) == 3


def test_end_to_end_solar_benchmark(tmp_path, dataset, experiment_config):
    ckpt = tmp_path / "ckpt"
    for lineage in ("with_clouds", "no_clouds"):
        code = cli.main(["train-solar", "--data", str(dataset), "--net", "mlp", "--lineage", lineage,
                         "--config", str(experiment_config), "--seed", "1", "--jobs", "2", "--out", str(ckpt)])
        assert code == 0
    assert len(list(ckpt.glob("solar_*_mlp_*.ckpt"))) == 4

    report_dir = tmp_path / "report"
    scenarios = "ground_truth_clouds,forecasted_clouds[persistence],persistence_clouds,no_clouds"
    code = cli.main(["evaluate", "--data", str(dataset), "--checkpoints", str(ckpt), "--nets", "mlp,persistence",
                     "--scenarios", scenarios, "--out", str(report_dir)])
    assert code == 0

    report = pd.read_csv(report_dir / "skill_report.csv")
    fleet = report[report["site"] == "fleet"]
    assert set(fleet["net"]) == {"mlp", "persistence"}
    assert set(fleet["scenario"]) == {"ground_truth_clouds", "forecasted_clouds[persistence]",
                                      "persistence_clouds", "no_clouds"}
    cloud_eval = pd.read_csv(report_dir / "cloud_eval.csv")
    assert set(cloud_eval["model_id"]) == {"persistence"}
    manifest = json.loads((report_dir / "run_manifest.json").read_text())
    assert "skill_report.csv" in manifest["outputs"]


def test_train_cloud_writes_checkpoint_and_history(tmp_path, dataset, experiment_config):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"cell": "convlstm", "hidden_channels": 2, "batch_size": 8}), encoding="utf-8")
    ckpt = tmp_path / "ckpt"
    code = cli.main(["train-cloud", "--data", str(dataset), "--spec", str(spec), "--config", str(experiment_config),
                     "--model-id", "tiny", "--out", str(ckpt)])
    assert code == 0
    assert (ckpt / "cloud_tiny.ckpt").exists() and (ckpt / "cloud_tiny.json").exists()
    history = pd.read_csv(ckpt / "history_cloud_tiny.csv")
    assert 1 <= len(history) <= 5


def test_gradcheck_command(tmp_path, capsys):
    assert cli.main(["gradcheck", "--out", str(tmp_path)]) == 0
    table = pd.read_csv(tmp_path / "gradcheck.csv")
    assert table["passed"].all()
    assert "All" in capsys.readouterr().out


def desk_run(root, dataset, experiment_config, spec):
    ckpt, report_dir = root / "ckpt", root / "report"
    assert cli.main(["train-cloud", "--data", str(dataset), "--spec", str(spec), "--config", str(experiment_config),
                     "--model-id", "convlstm", "--out", str(ckpt)]) == 0
    assert cli.main(["train-solar", "--data", str(dataset), "--net", "mlp", "--config", str(experiment_config),
                     "--seed", "1", "--jobs", "2", "--out", str(ckpt)]) == 0
    scenarios = "ground_truth_clouds,forecasted_clouds[convlstm],forecasted_clouds[persistence]"
    assert cli.main(["evaluate", "--data", str(dataset), "--checkpoints", str(ckpt), "--nets", "mlp",
                     "--scenarios", scenarios, "--out", str(report_dir)]) == 0
    return ckpt, report_dir


def test_two_runs_give_byte_identical_reports_and_checkpoints(tmp_path, dataset, experiment_config):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"cell": "convlstm", "hidden_channels": 2, "batch_size": 8}), encoding="utf-8")
    first_ckpt, first_report = desk_run(tmp_path / "first", dataset, experiment_config, spec)
    second_ckpt, second_report = desk_run(tmp_path / "second", dataset, experiment_config, spec)

    checkpoints = sorted(p.name for p in first_ckpt.glob("*.ckpt"))
    assert "cloud_convlstm.ckpt" in checkpoints and len(checkpoints) == 3
    assert checkpoints == sorted(p.name for p in second_ckpt.glob("*.ckpt"))
    for name in checkpoints:
        assert (first_ckpt / name).read_bytes() == (second_ckpt / name).read_bytes(), name

    reports = sorted(p.name for p in first_report.glob("*.csv"))
    assert {"skill_report.csv", "attention_gain.csv", "cloud_eval.csv"} <= set(reports)
    for name in reports + ["skill_tables.txt"]:
        assert (first_report / name).read_bytes() == (second_report / name).read_bytes(), name
