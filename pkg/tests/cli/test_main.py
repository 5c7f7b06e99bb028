import csv
import io
import json
import os

import numpy as np
import pytest
from rich.console import Console

import trainer.trainer as trainer_module
from cli.dataset_io import write_split
from evalkit.center_error import MM_PER_PX
from main import main
from postprocess.utils.detection import Detection, write_detections
from tensor.tensor import Tensor
from utils.errors import ExitCode
from utils.sample import RIPE, Annotation, Sample


def run(*argv):
    console = Console(file=io.StringIO(), width=120)
    code = main(["--no-live", "-q", *argv], console=console)
    return code, console.file.getvalue()


def error_line(capsys):
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith("error code=")]
    assert len(lines) == 1
    return lines[0]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    code, _ = run("synth", "--out", str(root), "--n-images", "10", "--image-size", "64", "--seed", "3")
    assert code == ExitCode.SUCCESS
    return root


class TestSynth:
    def test_layout(self, dataset):
        info = json.loads((dataset / "dataset.json").read_text())
        assert info["splits"] == {"train": 7, "val": 2, "test": 1}
        ids = set()
        for split in ("train", "val", "test"):
            manifest = (dataset / split / "manifest.txt").read_text().split()
            assert len(manifest) == info["splits"][split]
            for image_id in manifest:
                assert (dataset / split / "images" / f"{image_id}.png").exists()
                assert (dataset / split / "labels" / f"{image_id}.txt").exists()
            ids |= set(manifest)
        assert len(ids) == 10

    def test_reproducible(self, tmp_path):
        for name in ("a", "b"):
            assert run("synth", "--out", str(tmp_path / name), "--n-images", "6", "--image-size", "64")[0] == 0
        for split in ("train", "val", "test"):
            for sub in ("images", "labels"):
                for entry in sorted(os.listdir(tmp_path / "a" / split / sub)):
                    first = (tmp_path / "a" / split / sub / entry).read_bytes()
                    assert first == (tmp_path / "b" / split / sub / entry).read_bytes()


class TestEvalFixture:
    def test_precision_from_detection_file(self, tmp_path, capsys):
        size = 416
        anns = [Annotation(RIPE, (20.0 * k / size, 0.0, (20.0 * k + 10.0) / size, 10.0 / size),
                           ((20.0 * k + 5.0) / size, 5.0 / size)) for k in range(8)]
        write_split(str(tmp_path / "data"), "test", [Sample("fixture", np.full((size, size, 3), 0.5), anns)])
        dets = [Detection(RIPE, 0.9, (20.0 * k, 0.0, 20.0 * k + 10.0, 10.0), (20.0 * k + 8.0, 9.0))
                for k in range(8)]
        dets += [Detection(RIPE, 0.6, (300.0, 300.0, 310.0, 310.0), (305.0, 305.0)),
                 Detection(RIPE, 0.5, (400.0, 300.0, 410.0, 310.0), (405.0, 305.0))]
        write_detections(str(tmp_path / "dets.txt"), {"fixture": dets})

        code, table = run("eval", "--data", str(tmp_path / "data"), "--detections", str(tmp_path / "dets.txt"),
                          "--out", str(tmp_path / "eval"))
        assert code == ExitCode.SUCCESS
        metrics = json.loads((tmp_path / "eval" / "metrics.json").read_text())
        assert metrics["precision"] == pytest.approx(0.8)
        assert metrics["recall"] == pytest.approx(1.0)
        assert metrics["center"]["rmse_euclidean"] == pytest.approx(5.0, abs=1e-3)
        assert metrics["center"]["rmse_euclidean_mm"] == pytest.approx(5.0 * MM_PER_PX, abs=1e-3)
        rows = list(csv.reader((tmp_path / "eval" / "pr.csv").open()))
        assert len(rows) == 11
        assert (tmp_path / "eval" / "center_hist.csv").exists()
        assert "Precision" in table


class TestPipeline:
    def test_train_eval_prune_eval_infer(self, dataset, tmp_path):
        run_dir, pruned_dir = tmp_path / "run", tmp_path / "pruned"
        code, table = run("train", "--data", str(dataset), "--out", str(run_dir), "--preset", "baseline",
                          "--epochs", "1", "--batch-size", "4", "--width-multiple", "0.125")
        assert code == ExitCode.SUCCESS
        assert "Training" in table
        with (run_dir / "train_log.csv").open() as f:
            assert len(list(csv.DictReader(f))) == 1
        assert json.loads((run_dir / "run_config.json").read_text())["preset"] == "baseline"

        weights = str(run_dir / "weights.rlw")
        assert run("eval", "--data", str(dataset), "--weights", weights, "--out", str(tmp_path / "e1"))[0] == 0
        assert (tmp_path / "e1" / "detections.txt").exists()

        assert run("prune", "--weights", weights, "--out", str(pruned_dir), "--ratio", "0.3")[0] == 0
        report = json.loads((pruned_dir / "prune_report.json").read_text())
        assert report["ratio_requested"] == 0.3
        assert report["params_after"] < report["params_before"]

        pruned = str(pruned_dir / "weights.rlw")
        assert run("eval", "--data", str(dataset), "--weights", pruned, "--out", str(tmp_path / "e2"))[0] == 0
        metrics = json.loads((tmp_path / "e2" / "metrics.json").read_text())
        assert 0.0 <= metrics["map50"] <= 1.0

        code, table = run("infer", "--weights", pruned, "--source", str(dataset / "val" / "images"),
                          "--out", str(tmp_path / "infer"), "--conf", "0.01")
        assert code == ExitCode.SUCCESS
        assert sorted(os.listdir(tmp_path / "infer" / "images")) == sorted(os.listdir(dataset / "val" / "images"))
        assert (tmp_path / "infer" / "detections.txt").exists()
        assert "FPS" in table

    def test_augpreview(self, dataset, tmp_path):
        code, _ = run("augpreview", "--data", str(dataset), "--out", str(tmp_path), "--n-images", "5")
        assert code == ExitCode.SUCCESS
        assert len((tmp_path / "preview" / "manifest.txt").read_text().split()) == 5
        assert len(os.listdir(tmp_path / "preview" / "annotated")) == 5


def test_flops_matches_lite_size(tmp_path):
    code, table = run("flops", "--no-compare-dense", "--graph", str(tmp_path / "graph.dot"),
                      "--report", str(tmp_path / "flops.json"))
    assert code == ExitCode.SUCCESS
    report = json.loads((tmp_path / "flops.json").read_text())
    assert abs(report["total_params"] - 2.38e6) <= 0.10 * 2.38e6
    assert report["head_ratio"] <= 0.5
    assert set(report["params"]) == {"backbone", "neck", "head"}
    assert "digraph" in (tmp_path / "graph.dot").read_text()
    assert "total" in table


class TestErrors:
    def test_missing_dataset_is_a_data_error(self, tmp_path, capsys):
        code, _ = run("eval", "--data", str(tmp_path / "missing"), "--weights", "w.rlw", "--out", str(tmp_path))
        assert code == ExitCode.DATA
        assert error_line(capsys).startswith("error code=2 kind=DataError message=")

    def test_unknown_flag_is_a_usage_error(self, capsys):
        code, _ = run("train", "--learning-rate", "0.1")
        assert code == ExitCode.USAGE
        assert error_line(capsys).startswith("error code=1 kind=ConfigError")

    def test_unknown_config_key(self, tmp_path, capsys):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"out": str(tmp_path), "colour": "red"}))
        assert run("synth", "--config", str(path))[0] == ExitCode.USAGE
        assert "colour" in error_line(capsys)

    def test_bad_weights_file(self, tmp_path, capsys):
        path = tmp_path / "weights.rlw"
        path.write_bytes(b"nope")
        code, _ = run("prune", "--weights", str(path), "--out", str(tmp_path / "o"))
        assert code == ExitCode.DATA
        assert "kind=DataError" in error_line(capsys)

    def test_nan_loss_exit_code(self, dataset, tmp_path, monkeypatch, capsys):
        real = trainer_module.total_loss

        def nan_loss(heads, assignments, weights):
            _, items = real(heads, assignments, weights)
            return Tensor(np.array(np.nan)), items

        monkeypatch.setattr(trainer_module, "total_loss", nan_loss)
        code, _ = run("train", "--data", str(dataset), "--out", str(tmp_path), "--preset", "baseline",
                      "--epochs", "1", "--batch-size", "4", "--width-multiple", "0.125")
        assert code == ExitCode.NUMERIC
        assert error_line(capsys).startswith("error code=3 kind=NumericError")
        assert os.listdir(tmp_path / "incidents" / "nan_loss")
