"""End-to-end CLI behavior: artifacts, exit codes, determinism, reports."""

import json
from pathlib import Path

import numpy as np
import pytest

from spikeshot import read_framestack, write_ncem
from spikeshot.cli import main
from _synth import make_separable_benchmark, write_embedding_set


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def make_csv_dataset(root: Path, per_class: int = 2) -> int:
    rng = np.random.default_rng(0)
    total = 0
    for cls in ("square", "cross"):
        d = root / cls
        d.mkdir(parents=True)
        (d / "dims.txt").write_text("8x8")
        for i in range(per_class):
            lines = [
                f"{int(t)},{int(rng.integers(0, 8))},{int(rng.integers(0, 8))},{int(rng.integers(0, 2))}"
                for t in sorted(rng.integers(0, 500, size=30))
            ]
            (d / f"rec{i}.csv").write_text("\n".join(lines) + "\n")
            total += 1
    return total


@pytest.fixture()
def embedding_fixture(tmp_path):
    """Synthetic NCEM text + train/test manifests standing in for the bridge."""
    text, trf, trl, tef, tel = make_separable_benchmark(
        train_per_class=20, test_per_class=5, seed=17
    )
    names = text.labels
    train_manifest = write_embedding_set(tmp_path / "train", "toy", trf, trl, names)
    test_manifest = write_embedding_set(tmp_path / "test", "toy", tef, tel, names)
    text_path = tmp_path / "text.ncem"
    text_path.write_bytes(write_ncem(text))
    return text_path, train_manifest, test_manifest


class TestProject:
    def test_writes_stacks_and_manifest(self, tmp_path, capsys):
        root = tmp_path / "data"
        n = make_csv_dataset(root)
        out = tmp_path / "frames"
        code, stdout, _ = run_cli(
            ["project", str(root), "--kind", "csv", "--timesteps", "2", "--out", str(out)],
            capsys,
        )
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["samples"]) == n
        assert manifest["class_names"] == ["cross", "square"]
        for sample in manifest["samples"]:
            stack = read_framestack((out / sample["file"]).read_bytes())
            assert stack.timesteps == 2
        assert "spikeshot-bridge" in stdout

    def test_rerun_is_byte_identical(self, tmp_path, capsys):
        root = tmp_path / "data"
        make_csv_dataset(root)
        out = tmp_path / "frames"
        argv = ["project", str(root), "--timesteps", "3", "--out", str(out)]
        assert run_cli(argv, capsys)[0] == 0
        first = {p.name: p.read_bytes() for p in out.iterdir()}
        assert run_cli(argv, capsys)[0] == 0
        second = {p.name: p.read_bytes() for p in out.iterdir()}
        assert first == second

    def test_unreadable_root_exits_2(self, tmp_path, capsys):
        code, _, stderr = run_cli(
            ["project", str(tmp_path / "nope"), "--out", str(tmp_path / "o")], capsys
        )
        assert code == 2
        assert "error" in stderr

    def test_parse_failure_removes_partial_outputs(self, tmp_path, capsys):
        root = tmp_path / "data"
        make_csv_dataset(root)
        (root / "square" / "rec9.csv").write_text("not,a,valid\n")
        out = tmp_path / "frames"
        code, _, stderr = run_cli(["project", str(root), "--out", str(out)], capsys)
        assert code == 2
        assert not list(out.glob("*.ncfs"))

    def test_workers_match_serial(self, tmp_path, capsys):
        root = tmp_path / "data"
        make_csv_dataset(root, per_class=3)
        out = tmp_path / "frames"
        run_cli(["project", str(root), "--out", str(out)], capsys)
        serial = {p.name: p.read_bytes() for p in out.iterdir()}
        run_cli(["project", str(root), "--out", str(out), "--workers", "4"], capsys)
        parallel = {p.name: p.read_bytes() for p in out.iterdir()}
        assert serial == parallel

    def test_config_file_supplies_defaults(self, tmp_path, capsys):
        root = tmp_path / "data"
        make_csv_dataset(root)
        cfg = tmp_path / "run.cfg"
        cfg.write_text("timesteps = 5\nwindow-policy = equal-count\n")
        out = tmp_path / "frames"
        code, _, _ = run_cli(
            ["project", str(root), "--out", str(out), "--config", str(cfg)], capsys
        )
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["timesteps"] == 5
        # explicit flag beats the file
        out2 = tmp_path / "frames2"
        run_cli(
            ["project", str(root), "--out", str(out2), "--config", str(cfg),
             "--timesteps", "2"],
            capsys,
        )
        assert json.loads((out2 / "manifest.json").read_text())["timesteps"] == 2


class TestZeroshot:
    def test_separable_fixture_scores_high(self, embedding_fixture, tmp_path, capsys):
        text_path, _, test_manifest = embedding_fixture
        report_path = tmp_path / "report.json"
        code, stdout, _ = run_cli(
            ["zeroshot", "--text-embeddings", str(text_path),
             "--manifest", str(test_manifest), "--report", str(report_path)],
            capsys,
        )
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["accuracy"] >= 0.75
        assert report["config"]["alphas"] == [0.5, 0.5]
        assert len(report["confusion"]) == 4

    def test_orthogonal_means_are_perfectly_separable(self, tmp_path, capsys):
        # Classes exactly on orthonormal anchors: accuracy must be 1.0.
        text, *_ = make_separable_benchmark(seed=5)
        anchors = text.values.astype(np.float64)
        stacks = np.stack([np.stack([a, a]) for a in anchors])
        manifest = write_embedding_set(
            tmp_path / "emb", "exact", stacks, np.arange(4), text.labels
        )
        text_path = tmp_path / "text.ncem"
        text_path.write_bytes(write_ncem(text))
        code, stdout, _ = run_cli(
            ["zeroshot", "--text-embeddings", str(text_path), "--manifest", str(manifest)],
            capsys,
        )
        assert code == 0
        assert json.loads(stdout[stdout.index("{"):])["accuracy"] == 1.0

    def test_missing_text_embeddings_exits_3(self, embedding_fixture, tmp_path, capsys):
        _, _, test_manifest = embedding_fixture
        missing = tmp_path / "absent.ncem"
        code, _, stderr = run_cli(
            ["zeroshot", "--text-embeddings", str(missing), "--manifest", str(test_manifest)],
            capsys,
        )
        assert code == 3
        assert str(missing) in stderr

    def test_zero_alphas_exit_4(self, embedding_fixture, capsys):
        text_path, _, test_manifest = embedding_fixture
        code, _, stderr = run_cli(
            ["zeroshot", "--text-embeddings", str(text_path),
             "--manifest", str(test_manifest), "--alphas", "0,0"],
            capsys,
        )
        assert code == 4

    def test_grid_search_runs(self, embedding_fixture, tmp_path, capsys):
        text_path, _, test_manifest = embedding_fixture
        code, stdout, _ = run_cli(
            ["zeroshot", "--text-embeddings", str(text_path),
             "--manifest", str(test_manifest), "--alphas", "grid", "--seed", "1"],
            capsys,
        )
        assert code == 0
        report = json.loads(stdout[stdout.index("{"):])
        assert "grid" in report["alpha_selection"]
        assert abs(sum(report["config"]["alphas"]) - 1.0) < 1e-9

    def test_predictions_jsonl(self, embedding_fixture, tmp_path, capsys):
        text_path, _, test_manifest = embedding_fixture
        pred_path = tmp_path / "pred.jsonl"
        code, _, _ = run_cli(
            ["zeroshot", "--text-embeddings", str(text_path),
             "--manifest", str(test_manifest), "--predictions", str(pred_path)],
            capsys,
        )
        assert code == 0
        rows = [json.loads(line) for line in pred_path.read_text().splitlines()]
        assert len(rows) == 20
        assert all(set(r) == {"id", "argmax", "top5"} for r in rows)


class TestFewshot:
    def test_shots_zero_equals_zeroshot(self, embedding_fixture, tmp_path, capsys):
        text_path, train_manifest, test_manifest = embedding_fixture
        ckpt = tmp_path / "adapter.ncad"
        code, stdout, _ = run_cli(
            ["fewshot", "--text-embeddings", str(text_path),
             "--train-manifest", str(train_manifest), "--test-manifest", str(test_manifest),
             "--shots", "0", "--checkpoint", str(ckpt)],
            capsys,
        )
        assert code == 0
        report = json.loads(stdout[stdout.index("{"):])
        assert report["adapted_accuracy"] == report["zero_shot_accuracy"]
        assert report["bypass_equals_zero_shot"] is True
        assert ckpt.exists()

    def test_deterministic_checkpoint(self, embedding_fixture, tmp_path, capsys):
        text_path, train_manifest, test_manifest = embedding_fixture
        blobs = []
        for name in ("a.ncad", "b.ncad"):
            ckpt = tmp_path / name
            code, _, _ = run_cli(
                ["fewshot", "--text-embeddings", str(text_path),
                 "--train-manifest", str(train_manifest),
                 "--test-manifest", str(test_manifest),
                 "--shots", "4", "--epochs", "8", "--seed", "9",
                 "--checkpoint", str(ckpt)],
                capsys,
            )
            assert code == 0
            blobs.append(ckpt.read_bytes())
        assert blobs[0] == blobs[1]

    def test_insufficient_shots_exit_5(self, embedding_fixture, tmp_path, capsys):
        text_path, train_manifest, test_manifest = embedding_fixture
        code, _, stderr = run_cli(
            ["fewshot", "--text-embeddings", str(text_path),
             "--train-manifest", str(train_manifest), "--test-manifest", str(test_manifest),
             "--shots", "999", "--checkpoint", str(tmp_path / "x.ncad")],
            capsys,
        )
        assert code == 5

    def test_bypass_check_present_after_training(self, embedding_fixture, tmp_path, capsys):
        text_path, train_manifest, test_manifest = embedding_fixture
        code, stdout, _ = run_cli(
            ["fewshot", "--text-embeddings", str(text_path),
             "--train-manifest", str(train_manifest), "--test-manifest", str(test_manifest),
             "--shots", "4", "--epochs", "5", "--checkpoint", str(tmp_path / "c.ncad")],
            capsys,
        )
        assert code == 0
        report = json.loads(stdout[stdout.index("{"):])
        assert report["bypass_equals_zero_shot"] is True
        assert report["bypass_accuracy"] == report["zero_shot_accuracy"]
        assert len(report["training_curve"]) >= 1


class TestEval:
    def test_scores_predictions(self, embedding_fixture, tmp_path, capsys):
        text_path, _, test_manifest = embedding_fixture
        pred_path = tmp_path / "pred.jsonl"
        run_cli(
            ["zeroshot", "--text-embeddings", str(text_path),
             "--manifest", str(test_manifest), "--predictions", str(pred_path)],
            capsys,
        )
        code, stdout, _ = run_cli(
            ["eval", "--predictions", str(pred_path), "--manifest", str(test_manifest)],
            capsys,
        )
        assert code == 0
        report = json.loads(stdout[stdout.index("{"):])
        assert 0.0 <= report["accuracy"] <= 1.0

    def test_unknown_sample_rejected(self, embedding_fixture, tmp_path, capsys):
        _, _, test_manifest = embedding_fixture
        pred_path = tmp_path / "pred.jsonl"
        pred_path.write_text('{"id": "ghost", "argmax": 0, "top5": [0]}\n')
        code, _, _ = run_cli(
            ["eval", "--predictions", str(pred_path), "--manifest", str(test_manifest)],
            capsys,
        )
        assert code == 2


class TestReproduce:
    def test_missing_assets_exit_3_with_hint(self, tmp_path, capsys):
        code, _, stderr = run_cli(["reproduce", "--assets", str(tmp_path)], capsys)
        assert code == 3
        assert "nmnist/text.ncem" in stderr
        assert "spikeshot-bridge" in stderr

    def test_four_comparison_rows_on_synthetic_assets(self, tmp_path, capsys):
        for ds in ("nmnist", "cifar10dvs"):
            text, trf, trl, tef, tel = make_separable_benchmark(
                train_per_class=18, test_per_class=4, seed=29
            )
            (tmp_path / ds).mkdir(parents=True)
            (tmp_path / ds / "text.ncem").write_bytes(write_ncem(text))
            write_embedding_set(tmp_path / ds / "train", ds, trf, trl, text.labels)
            write_embedding_set(tmp_path / ds / "test", ds, tef, tel, text.labels)
        code, stdout, _ = run_cli(
            ["reproduce", "--assets", str(tmp_path), "--seed", "0"], capsys
        )
        assert code == 0
        report = json.loads(stdout[stdout.index("{"):])
        assert len(report["rows"]) == 4
        settings = {(r["dataset"], r["setting"]) for r in report["rows"]}
        assert settings == {
            ("nmnist", "zero-shot"), ("nmnist", "16-shot"),
            ("cifar10dvs", "zero-shot"), ("cifar10dvs", "16-shot"),
        }
        for r in report["rows"]:
            assert "delta_percent" in r and "within_tolerance" in r
