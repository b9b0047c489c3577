"""CLI contract: exit codes, emitted files, resolved run configs."""

import json

import numpy as np
import pytest
from PIL import Image

from covidscreen.cli import dispatch
from covidscreen.manifest import Label, Split, load_manifest
from covidscreen.tensorio import read_tensor

from conftest import write_dataset


class TestExitCodes:
    def test_no_arguments_is_usage_error(self, capsys):
        assert dispatch([]) == 1
        assert "Usage" in capsys.readouterr().err

    def test_help_is_success(self):
        assert dispatch(["--help"]) == 0

    def test_unknown_command(self):
        assert dispatch(["frobnicate"]) == 1

    def test_missing_checkpoint_is_runtime_failure(self, tmp_path, capsys, two_class_manifest):
        code = dispatch(["eval", "--ckpt", str(tmp_path / "missing.ckpt"),
                         "--data", str(two_class_manifest),
                         "--report", str(tmp_path / "report")])
        assert code == 2
        assert "missing.ckpt" in capsys.readouterr().err


class TestRoc:
    def test_scores_to_points_and_auc(self, tmp_path, capsys):
        scores = tmp_path / "scores.txt"
        scores.write_text("1 0.9\n1 0.7\n0 0.4\n0 0.2\n1 0.4\n")
        out = tmp_path / "roc.txt"
        fig = tmp_path / "roc.png"
        code = dispatch(["roc", "--scores", str(scores), "--out", str(out),
                         "--fig", str(fig)])
        assert code == 0
        stdout = capsys.readouterr().out
        assert stdout.startswith("AUC ")
        lines = out.read_text().splitlines()
        assert lines[0].split() == ["0.000000000", "0.000000000"]
        assert lines[-1].split() == ["1.000000000", "1.000000000"]
        assert fig.exists() and fig.stat().st_size > 0

    def test_malformed_line_is_runtime_failure(self, tmp_path):
        scores = tmp_path / "scores.txt"
        scores.write_text("1 0.9\noops\n")
        assert dispatch(["roc", "--scores", str(scores),
                         "--out", str(tmp_path / "o.txt")]) == 2

    def test_missing_scores_file(self, tmp_path):
        assert dispatch(["roc", "--scores", str(tmp_path / "gone.txt"),
                         "--out", str(tmp_path / "o.txt")]) == 2


class TestDataCommands:
    def test_split_writes_manifest_and_config(self, tmp_path, two_class_manifest):
        out = tmp_path / "split.csv"
        code = dispatch(["data", "split", "--manifest", str(two_class_manifest),
                         "--seed", "3", "--ratios", "0.5,0.25,0.25",
                         "--no-group-by-patient", "--out", str(out)])
        assert code == 0
        manifest = load_manifest(out, verify_files=False)
        totals = manifest.split_totals()
        assert sum(totals.values()) == len(manifest)
        config = json.loads((tmp_path / "split.csv.run_config.json").read_text())
        assert config["seed"] == 3
        assert config["ratios"] == [0.5, 0.25, 0.25]

    def test_validate_lenient_ok(self, two_class_manifest, capsys):
        code = dispatch(["data", "validate", "--manifest", str(two_class_manifest),
                         "--lenient"])
        assert code == 0
        assert "0 failures" in capsys.readouterr().out

    def test_validate_strict_fails_small_images(self, two_class_manifest):
        # 64x64 synthetic images violate the strict size bounds
        assert dispatch(["data", "validate", "--manifest",
                         str(two_class_manifest), "--strict"]) == 2


class TestPreprocessCommand:
    def test_directory_to_tensors(self, tmp_path):
        src = tmp_path / "imgs"
        src.mkdir()
        rng = np.random.default_rng(0)
        for i in range(3):
            Image.fromarray(rng.integers(0, 256, (40, 40, 3), dtype=np.uint8)
                            ).save(src / f"img{i}.png")
        out = tmp_path / "tensors"
        code = dispatch(["preprocess", "--in", str(src), "--out", str(out),
                         "--mode", "eval", "--seed", "5", "--size", "64"])
        assert code == 0
        files = sorted(out.glob("*.cst"))
        assert len(files) == 3
        tensor = read_tensor(files[0])
        assert tensor.shape == (64, 64, 3)
        assert tensor.dtype == np.float32
        config = json.loads((out / "run_config.json").read_text())
        assert config["seed"] == 5

    def test_missing_input_dir(self, tmp_path):
        assert dispatch(["preprocess", "--in", str(tmp_path / "none"),
                         "--out", str(tmp_path / "out")]) == 2


class TestModelCommands:
    def test_predict_single_image(self, tmp_path, tiny_ct_checkpoint, capsys):
        rng = np.random.default_rng(1)
        img = tmp_path / "scan.png"
        Image.fromarray(rng.integers(0, 256, (64, 64, 3), dtype=np.uint8)).save(img)
        code = dispatch(["predict", "--ckpt", str(tiny_ct_checkpoint),
                         "--image", str(img)])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert len(payload["probabilities"]) == 3
        assert payload["predicted_label"] in ("covid19", "other_pneumonia", "normal")

    def test_cam_writes_overlay_and_heatmap(self, tmp_path, tiny_ct_checkpoint):
        rng = np.random.default_rng(2)
        img = tmp_path / "scan.png"
        Image.fromarray(rng.integers(0, 256, (80, 80, 3), dtype=np.uint8)).save(img)
        overlay = tmp_path / "overlay.png"
        heatmap = tmp_path / "heat.cst"
        code = dispatch(["cam", "--ckpt", str(tiny_ct_checkpoint),
                         "--image", str(img), "--class", "covid19",
                         "--alpha", "0.4", "--out", str(overlay),
                         "--heatmap-out", str(heatmap)])
        assert code == 0
        with Image.open(overlay) as rendered:
            assert rendered.size == (80, 80)
        grid = read_tensor(heatmap)
        assert grid.shape == (256, 256)
        assert (tmp_path / "overlay.png.run_config.json").exists()

    def test_eval_emits_report_bundle(self, tmp_path, tiny_ct_checkpoint,
                                      two_class_manifest):
        report_dir = tmp_path / "report"
        code = dispatch(["eval", "--ckpt", str(tiny_ct_checkpoint),
                         "--data", str(two_class_manifest),
                         "--report", str(report_dir)])
        assert code == 0
        for name in ("report.txt", "report.csv", "roc_points.txt",
                     "roc_curve.png", "run_config.json"):
            assert (report_dir / name).exists(), name
        table = (report_dir / "report.txt").read_text()
        assert "Precision" in table and "AUC" in table


class TestCheckpointPipelineConfig:
    def test_eval_uses_training_input_size(self, tmp_path, two_class_manifest):
        """A 128-input checkpoint must drive eval/predict/cam at 128."""
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({
            "preprocess": {"target_size": [128, 128, 3], "augment_enabled": False},
            "train": {"learning_rate": 1e-3, "batch_size": 10, "max_epochs": 1,
                      "seed": 1, "early_stop_patience": None},
            "model": {"backbone": "tiny", "backbone_channels": 16,
                      "hidden_width": 16, "input_size": 128,
                      "attention_kernels": [7, 5], "head_width": 2,
                      "pretrained_backbone": False},
        }))
        out = tmp_path / "run"
        assert dispatch(["train", "--model", "ct", "--config", str(config),
                         "--data", str(two_class_manifest),
                         "--out", str(out)]) == 0
        report = tmp_path / "report"
        assert dispatch(["eval", "--ckpt", str(out / "best.ckpt"),
                         "--data", str(two_class_manifest),
                         "--report", str(report)]) == 0
        img = next((two_class_manifest.parent / "covid19").glob("*.png"))
        assert dispatch(["predict", "--ckpt", str(out / "best.ckpt"),
                         "--image", str(img)]) == 0
        overlay = tmp_path / "o.png"
        assert dispatch(["cam", "--ckpt", str(out / "best.ckpt"),
                         "--image", str(img), "--class", "covid",
                         "--out", str(overlay)]) == 0
        assert overlay.exists()


class TestTrainCommand:
    def test_smoke_train_run(self, tmp_path, two_class_manifest):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({
            "preprocess": {"target_size": [128, 128, 3], "augment_enabled": False},
            "train": {"learning_rate": 1e-3, "batch_size": 10, "max_epochs": 1,
                      "seed": 0, "early_stop_patience": None},
            "model": {"backbone": "tiny", "backbone_channels": 16,
                      "hidden_width": 16, "input_size": 128,
                      "attention_kernels": [7, 5], "head_width": 2,
                      "pretrained_backbone": False},
        }))
        out = tmp_path / "run"
        code = dispatch(["train", "--model", "ct", "--config", str(config),
                         "--data", str(two_class_manifest), "--out", str(out)])
        assert code == 0
        for name in ("best.ckpt", "last.ckpt", "history.csv", "history.log",
                     "run_config.json"):
            assert (out / name).exists(), name
        run_config = json.loads((out / "run_config.json").read_text())
        assert run_config["train"]["seed"] == 0
