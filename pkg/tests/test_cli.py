from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from actioncodec.cli import main


def run(argv: list[str]) -> int:
    return main(argv)


def file_checksums(root: Path, skip: tuple[str, ...] = ("timing.json",)) -> dict[str, str]:
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file() and path.name not in skip and path.suffix != ".png":
            out[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


SYNTH_CONFIG = {
    "embodiments": [
        {"name": "arm7", "index": 0, "control_hz": 20.0, "action_dim": 7, "chunk_duration": 1.0},
        {"name": "arm5", "index": 1, "control_hz": 10.0, "action_dim": 5, "chunk_duration": 1.0},
    ],
    "n_tasks": 2,
    "episodes_per_task": 3,
    "duration_s": 2.0,
    "jitter": 0.03,
}

TRAIN_CONFIG = {
    "tokenizer": {
        "latent_dim": 32, "n_tokens": 4, "n_layers": 1, "n_heads": 2,
        "ff_multiplier": 2, "prompt_dim": 8, "fourier_freqs": 8,
        "vocab_size": 32, "levels": 1,
    },
    "training": {
        "steps": 15, "batch_size": 32, "or_every": 10, "or_pairs": 16,
        "kmeans_warmup_chunks": 32, "kmeans_iters": 8,
        "weights": {"vq": 1.0, "tcl": 0.1, "clip": 0.1, "l1": 1e-4, "infonce": 0.0},
    },
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "synth.json").write_text(json.dumps(SYNTH_CONFIG))
    (root / "train.json").write_text(json.dumps(TRAIN_CONFIG))
    code = run(["synth", "--config", str(root / "synth.json"), "--seed", "3",
                "--out", str(root / "data")])
    assert code == 0
    code = run(["train", "--config", str(root / "train.json"), "--seed", "4",
                "--out", str(root / "run"), "--dataset", str(root / "data" / "dataset.jsonl")])
    assert code == 0
    return root


class TestSynth:
    def test_outputs_written(self, workspace):
        data = workspace / "data"
        for name in ("dataset.jsonl", "stats.json", "registry.json", "resolved_config.json"):
            assert (data / name).exists()

    def test_missing_field_exit_2(self, workspace, tmp_path, capsys):
        bad = dict(SYNTH_CONFIG)
        del bad["n_tasks"]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(bad))
        code = run(["synth", "--config", str(path), "--out", str(tmp_path / "out")])
        assert code == 2
        assert "n_tasks" in capsys.readouterr().err

    def test_rerun_checksum_identical(self, workspace, tmp_path):
        out2 = tmp_path / "data2"
        code = run(["synth", "--config", str(workspace / "synth.json"), "--seed", "3",
                    "--out", str(out2)])
        assert code == 0
        assert file_checksums(workspace / "data") == file_checksums(out2)


class TestTrain:
    def test_outputs(self, workspace):
        run_dir = workspace / "run"
        assert (run_dir / "checkpoint" / "manifest.json").exists()
        assert (run_dir / "checkpoint" / "params.bin").exists()
        assert (run_dir / "train_log.csv").exists()

    def test_rerun_checksum_identical(self, workspace, tmp_path):
        out2 = tmp_path / "run2"
        code = run(["train", "--config", str(workspace / "train.json"), "--seed", "4",
                    "--out", str(out2), "--dataset", str(workspace / "data" / "dataset.jsonl")])
        assert code == 0
        assert file_checksums(workspace / "run") == file_checksums(out2)

    def test_missing_dataset_flag(self, workspace, tmp_path, capsys):
        code = run(["train", "--config", str(workspace / "train.json"),
                    "--out", str(tmp_path / "x")])
        assert code == 2
        assert "--dataset" in capsys.readouterr().err


class TestPosttrain:
    def test_posttrain_and_audit(self, workspace, tmp_path):
        cfg = tmp_path / "post.json"
        cfg.write_text(json.dumps({
            "depth": 2, "steps": 10, "audit_chunks": 50,
            "training": {"batch_size": 32, "eval_every": 5, "eval_chunks": 32,
                          "kmeans_warmup_chunks": 32, "kmeans_iters": 8},
        }))
        out = tmp_path / "post"
        code = run(["posttrain", "--config", str(cfg), "--seed", "5", "--out", str(out),
                    "--checkpoint", str(workspace / "run" / "checkpoint"),
                    "--dataset", str(workspace / "data" / "dataset.jsonl")])
        assert code == 0
        audit = json.loads((out / "audit.json").read_text())
        assert audit["level0_codes_changed"] == 0
        assert audit["audit_chunks"] == 50


class TestEval:
    def test_eval_outputs(self, workspace, tmp_path):
        cfg = tmp_path / "eval.json"
        cfg.write_text(json.dumps({
            "sigma_grid": [0.01, 0.05], "artifact_samples": 16, "artifact_anchors": 2,
            "max_chunks": 32, "or_pairs": 16,
        }))
        out = tmp_path / "eval"
        code = run(["eval", "--config", str(cfg), "--seed", "1", "--out", str(out),
                    "--checkpoint", str(workspace / "run" / "checkpoint"),
                    "--dataset", str(workspace / "data" / "dataset.jsonl")])
        assert code == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert 0.0 <= metrics["overlap_rate"] <= 1.0
        assert metrics["capacity_bits"] == 4 * 5.0  # n=4, S=32
        assert metrics["token_budget"] == 4
        assert len(metrics["artifact_entropy_sweep"]) == 2
        assert (out / "tokens.txt").exists()
        assert (out / "metrics.csv").exists()

    def test_eval_reproducible(self, workspace, tmp_path):
        cfg = tmp_path / "eval.json"
        cfg.write_text(json.dumps({
            "sigma_grid": [0.02], "artifact_samples": 8, "artifact_anchors": 2,
            "max_chunks": 16, "or_pairs": 8,
        }))
        outs = []
        for name in ("e1", "e2"):
            out = tmp_path / name
            code = run(["eval", "--config", str(cfg), "--seed", "9", "--out", str(out),
                        "--checkpoint", str(workspace / "run" / "checkpoint"),
                        "--dataset", str(workspace / "data" / "dataset.jsonl")])
            assert code == 0
            outs.append(file_checksums(out))
        assert outs[0] == outs[1]


@pytest.fixture(scope="module")
def compare_out(workspace, tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cmp")
    cfg = tmp / "compare.json"
    cfg.write_text(json.dumps({
        "tokenizers": ["actioncodec", "binning", "string"],
        "embodiment": "arm7",
        "binning": {"bins_per_dim": 1000, "horizon": 8},
        "string": {"precision": 3, "horizon": 8},
        "max_chunks": 24, "or_pairs": 16, "trials": 10, "per_token_delay": 0.001,
    }))
    out = tmp / "out"
    code = run(["compare", "--config", str(cfg), "--seed", "2", "--out", str(out),
                "--checkpoint", str(workspace / "run" / "checkpoint"),
                "--dataset", str(workspace / "data" / "dataset.jsonl")])
    assert code == 0
    return out


class TestCompare:
    def test_budget_semantics(self, compare_out):
        rows = json.loads((compare_out / "comparison.json").read_text())
        by_name = {r["tokenizer"]: r for r in rows}
        assert by_name["binning"]["token_budget_mean"] == 56.0  # T*D = 8*7
        assert by_name["binning"]["token_budget_std"] == 0.0
        assert by_name["actioncodec"]["token_budget_mean"] == 4.0  # n
        assert by_name["actioncodec"]["token_budget_std"] == 0.0

    def test_timing_separated(self, compare_out):
        timing = json.loads((compare_out / "timing.json").read_text())
        assert all("latency_s" in t for t in timing)
        rows = json.loads((compare_out / "comparison.json").read_text())
        assert all("latency_s" not in r for r in rows)

    def test_worker_fanout_matches_sequential(self, workspace, compare_out,
                                              tmp_path, monkeypatch):
        monkeypatch.setenv("ACTIONCODEC_THREADS", "2")
        cfg = tmp_path / "compare.json"
        cfg.write_text(json.dumps({
            "tokenizers": ["actioncodec", "binning", "string"],
            "embodiment": "arm7",
            "binning": {"bins_per_dim": 1000, "horizon": 8},
            "string": {"precision": 3, "horizon": 8},
            "max_chunks": 24, "or_pairs": 16, "trials": 10, "per_token_delay": 0.001,
        }))
        out = tmp_path / "fanout"
        code = run(["compare", "--config", str(cfg), "--seed", "2", "--out", str(out),
                    "--checkpoint", str(workspace / "run" / "checkpoint"),
                    "--dataset", str(workspace / "data" / "dataset.jsonl")])
        assert code == 0
        sequential = json.loads((compare_out / "comparison.json").read_text())
        fanned = json.loads((out / "comparison.json").read_text())
        assert fanned == sequential


class TestTransfer:
    def test_transfer_cross_embodiment(self, workspace, tmp_path):
        cfg = tmp_path / "transfer.json"
        cfg.write_text(json.dumps({"source": "arm7", "target": "arm5", "n_chunks": 2}))
        out = tmp_path / "tr"
        code = run(["transfer", "--config", str(cfg), "--seed", "0", "--out", str(out),
                    "--checkpoint", str(workspace / "run" / "checkpoint"),
                    "--dataset", str(workspace / "data" / "dataset.jsonl")])
        assert code == 0
        doc = json.loads((out / "transfer.json").read_text())
        assert doc["source"] == "arm7" and doc["target"] == "arm5"
        first = doc["chunks"][0]
        assert np.asarray(first["source_actions"]).shape == (20, 7)
        assert np.asarray(first["target_actions"]).shape == (10, 5)
        assert -1.0 <= first["velocity_cosine"] <= 1.0

    def test_transfer_to_self_is_reconstruction(self, workspace, tmp_path):
        cfg = tmp_path / "transfer_self.json"
        cfg.write_text(json.dumps({"source": "arm7", "target": "arm7", "n_chunks": 2}))
        out = tmp_path / "tr_self"
        code = run(["transfer", "--config", str(cfg), "--seed", "0", "--out", str(out),
                    "--checkpoint", str(workspace / "run" / "checkpoint"),
                    "--dataset", str(workspace / "data" / "dataset.jsonl")])
        assert code == 0
        doc = json.loads((out / "transfer.json").read_text())
        for record in doc["chunks"]:
            np.testing.assert_array_equal(
                np.asarray(record["source_actions"]), np.asarray(record["target_actions"])
            )
            assert abs(record["velocity_cosine"] - 1.0) < 1e-9


class TestPerturbAndReport:
    def test_perturb_then_report(self, workspace, tmp_path):
        cfg = tmp_path / "perturb.json"
        cfg.write_text(json.dumps({
            "policy": {"width": 32, "layers": 1, "heads": 2, "ff_multiplier": 2},
            "policy_steps": 20, "trials": 4, "stride_steps": 4, "eval_every": 10,
        }))
        out = workspace / "run"  # write next to train outputs so report finds both
        code = run(["perturb", "--config", str(cfg), "--seed", "0", "--out", str(out),
                    "--checkpoint", str(workspace / "run" / "checkpoint"),
                    "--dataset", str(workspace / "data" / "dataset.jsonl")])
        assert code == 0
        assert (out / "perturb_profile.csv").exists()
        assert (out / "policy_curve.csv").exists()
        code = run(["report", "--out", str(out)])
        assert code == 0
        assert (out / "train_log.png").exists()
        assert (out / "perturb_profile.png").exists()

    def test_report_empty_dir_fails(self, tmp_path, capsys):
        code = run(["report", "--out", str(tmp_path / "empty")])
        assert code == 1


class TestErrors:
    def test_unknown_tokenizer_in_compare(self, workspace, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"tokenizers": ["quantum"]}))
        code = run(["compare", "--config", str(cfg), "--out", str(tmp_path / "o"),
                    "--dataset", str(workspace / "data" / "dataset.jsonl")])
        assert code == 2
        assert "quantum" in capsys.readouterr().err

    def test_missing_checkpoint_flag(self, workspace, tmp_path, capsys):
        cfg = tmp_path / "eval.json"
        cfg.write_text(json.dumps({}))
        code = run(["eval", "--config", str(cfg), "--out", str(tmp_path / "o"),
                    "--dataset", str(workspace / "data" / "dataset.jsonl")])
        assert code == 2
        assert "--checkpoint" in capsys.readouterr().err

    def test_nonexistent_config(self, tmp_path, capsys):
        code = run(["synth", "--config", str(tmp_path / "nope.json"),
                    "--out", str(tmp_path / "o")])
        assert code == 2
