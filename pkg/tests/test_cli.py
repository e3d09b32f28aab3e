import json
import os

import numpy as np
import pytest

from ctse.cli import main
from ctse.ckpt import file_sha256


@pytest.fixture()
def mini_config(tmp_path):
    """Tiny toy config so CLI runs finish in seconds."""
    cfg = {
        "version": 1,
        "preset": "toy",
        "seed": 0,
        "corpus": {"kind": "toy", "seed": 5, "n_speakers": 8, "utts_per_speaker": 5},
        "encoder": {
            "config": {"backbone_scale": "toy"},
            "train": {"steps": 4, "batch_size": 4, "seed": 1, "log_every": 1},
        },
        "pbsrnn": {
            "config": {"n_bands": 4, "feature_dim": 8, "n_interleaved_blocks": 1,
                       "lstm_hidden": 8, "mlp_hidden": 16},
            "train_phase1": {"steps": 3, "batch_size": 1, "clip_s": 1.2, "seed": 2,
                             "log_every": 1},
            "train_phase2": {"steps": 3, "batch_size": 1, "clip_s": 2.4, "seed": 3,
                             "log_every": 1},
            "phase2": {"n_recordings": 2, "recording_s": 6.0, "seed": 4},
        },
        "atsvad": {
            "config": {"d_model": 16, "n_heads": 2, "conv_channels": 16},
            "train": {"steps": 3, "batch_size": 2, "lr": 1e-3, "n_recordings": 4,
                      "recording_s": 6.0, "holdout_recordings": 1, "seed": 5,
                      "log_every": 1},
        },
        "fusion": {"cascade1_alpha": 0.01, "crossfade_s": 0.01, "span_pad_s": 0.25},
        "eval": {
            "configs": ["0S", "OV20"],
            "n_recordings": 1,
            "duration_s": 8.0,
            "modes": ["tsvad_only", "pbsrnn_only", "cascade1", "cascade2", "parallel"],
            "seed": 300,
        },
    }
    path = tmp_path / "mini.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def _args(tmp_path, mini_config, *rest):
    return ["--config", mini_config, "--out", str(tmp_path / "out"), *rest]


class TestSimulateCommand:
    def test_writes_dataset_and_index(self, tmp_path, mini_config):
        rc = main(_args(tmp_path, mini_config, "simulate", "--split", "test"))
        assert rc == 0
        root = tmp_path / "out" / "datasets" / "test"
        assert (root / "0S" / "rec000" / "mixture.wav").exists()
        assert (root / "OV20" / "rec000" / "manifest.json").exists()
        index = json.loads((root / "index.json").read_text())
        assert len(index["recordings"]) == 2

    def test_rerun_same_seed_identical_index_hash(self, tmp_path, mini_config):
        main(_args(tmp_path, mini_config, "simulate", "--split", "test"))
        index_path = tmp_path / "out" / "datasets" / "test" / "index.json"
        first = file_sha256(str(index_path))
        main(_args(tmp_path, mini_config, "simulate", "--split", "test"))
        assert file_sha256(str(index_path)) == first

    def test_n_recordings_override(self, tmp_path, mini_config):
        rc = main(
            _args(tmp_path, mini_config, "simulate", "--split", "test", "--n-recordings", "3")
        )
        assert rc == 0
        rec_dir = tmp_path / "out" / "datasets" / "test" / "0S"
        assert sorted(os.listdir(rec_dir)) == ["rec000", "rec001", "rec002"]


class TestTrainCommand:
    def test_dependency_error_names_missing_stage(self, tmp_path, mini_config, capsys):
        rc = main(_args(tmp_path, mini_config, "train", "--stage", "pbsrnn_p2"))
        assert rc == 1
        assert "encoder" in capsys.readouterr().err
        assert main(_args(tmp_path, mini_config, "train", "--stage", "encoder")) == 0
        rc = main(_args(tmp_path, mini_config, "train", "--stage", "pbsrnn_p2"))
        assert rc == 1
        assert "pbsrnn_p1" in capsys.readouterr().err

    def test_atsvad_requires_encoder(self, tmp_path, mini_config, capsys):
        rc = main(_args(tmp_path, mini_config, "train", "--stage", "atsvad"))
        assert rc == 1
        assert "encoder" in capsys.readouterr().err

    def test_encoder_stage_writes_checkpoint_and_metrics(self, tmp_path, mini_config):
        rc = main(_args(tmp_path, mini_config, "train", "--stage", "encoder"))
        assert rc == 0
        out = tmp_path / "out"
        assert (out / "checkpoints" / "encoder.pt").exists()
        lines = (out / "metrics" / "encoder_metrics.csv").read_text().strip().splitlines()
        assert lines[0] == "step,loss,lr"
        steps = [int(l.split(",")[0]) for l in lines[1:]]
        assert steps == sorted(steps) and len(steps) >= 2


class TestFullPipelineTiny:
    def test_all_stages_then_eval_and_report(self, tmp_path, mini_config):
        base = _args(tmp_path, mini_config)
        assert main(base + ["simulate", "--split", "test"]) == 0
        for stage in ("encoder", "pbsrnn_p1", "pbsrnn_p2", "atsvad"):
            assert main(base + ["train", "--stage", stage]) == 0, stage
        out = tmp_path / "out"
        p2 = json.loads((out / "metrics" / "pbsrnn_p2_eval.json").read_text())
        assert set(p2) == {"0S", "OV20"}
        assert main(base + ["eval"]) == 0
        scores = (out / "eval" / "scores.csv").read_text()
        assert scores.count("cascade1") == 2  # one per recording
        report = (out / "eval" / "report.md").read_text()
        assert "NOT reproduced at desk scale" in report
        meta = json.loads((out / "eval" / "run_meta.json").read_text())
        assert set(meta["checkpoints_sha256"]) >= {"encoder", "atsvad"}
        assert main(base + ["report"]) == 0

    def test_ablation_emits_table(self, tmp_path, mini_config):
        base = _args(tmp_path, mini_config)
        assert main(base + ["train", "--stage", "encoder"]) == 0
        rc = main(
            base
            + [
                "ablate-window", "--windows", "0.75", "1.5", "3.0",
                "--steps", "2", "--n-recordings", "1", "--duration", "8.0",
            ]
        )
        assert rc == 0
        text = (tmp_path / "out" / "eval" / "ablation.csv").read_text()
        lines = text.strip().splitlines()
        assert lines[0] == "win_s,arch,der,jer,int_db"
        assert len(lines) == 4
        assert [l.split(",")[0] for l in lines[1:]] == ["0.75", "1.5", "3.0"]
        md = (tmp_path / "out" / "eval" / "ablation.md").read_text()
        assert "| Win | Arch |" in md


class TestErrorPaths:
    def test_eval_without_checkpoints_fails_cleanly(self, tmp_path, mini_config, capsys):
        rc = main(_args(tmp_path, mini_config, "eval"))
        assert rc == 1

    def test_report_without_scores(self, tmp_path, mini_config):
        assert main(_args(tmp_path, mini_config, "report")) == 1

    def test_bad_mode_rejected(self, tmp_path, mini_config):
        assert main(_args(tmp_path, mini_config, "eval", "--modes", "magic")) == 1

    def test_missing_config_file(self, tmp_path):
        rc = main(["--config", str(tmp_path / "none.json"), "--out", str(tmp_path), "report"])
        assert rc == 1
