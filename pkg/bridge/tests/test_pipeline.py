"""Whole-pipeline hand-off: project -> encode -> zeroshot via files only."""

import json

import numpy as np
import pytest

from spikeshot_bridge.cli import main as bridge_main

spikeshot_cli = pytest.importorskip(
    "spikeshot.cli", reason="classification toolkit not installed alongside the bridge"
)


def test_project_encode_classify_round_trip(tmp_path, capsys):
    rng = np.random.default_rng(0)
    root = tmp_path / "recordings"
    for cls in ("blink", "sweep"):
        d = root / cls
        d.mkdir(parents=True)
        (d / "dims.txt").write_text("16x16")
        for i in range(2):
            lines = [
                f"{int(t)},{int(rng.integers(0, 16))},{int(rng.integers(0, 16))},{int(rng.integers(0, 2))}"
                for t in sorted(rng.integers(0, 1000, size=40))
            ]
            (d / f"r{i}.csv").write_text("\n".join(lines) + "\n")

    frames = tmp_path / "frames"
    assert spikeshot_cli.main(
        ["project", str(root), "--kind", "csv", "--timesteps", "2", "--out", str(frames)]
    ) == 0

    embeddings = tmp_path / "embeddings"
    assert bridge_main(
        ["encode-frames-batch", "--manifest", str(frames / "manifest.json"),
         "--out-dir", str(embeddings)]
    ) == 0

    classes = tmp_path / "classes.txt"
    classes.write_text("blink\nsweep\n")
    text = tmp_path / "text.ncem"
    assert bridge_main(["encode-text", "--classes", str(classes), "--out", str(text)]) == 0

    report = tmp_path / "report.json"
    assert spikeshot_cli.main(
        ["zeroshot", "--text-embeddings", str(text),
         "--manifest", str(embeddings / "manifest.json"), "--report", str(report)]
    ) == 0
    result = json.loads(report.read_text())
    assert result["samples"] == 4
    assert 0.0 <= result["accuracy"] <= 1.0
    assert len(result["confusion"]) == 2
