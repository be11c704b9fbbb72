"""
Tests for the command-line entry point: exit codes, configuration printing and
a synth -> fuse -> eval/sweep/hist round on a small scene.
"""

import json
from pathlib import Path

import pandas as pd
import pytest

import app
from config import Config
from errors import EXIT_CONFIG, EXIT_INPUT, EXIT_INTERNAL, EXIT_OK

SMALL_SCENE = {"height": 48, "width": 48, "num_instances": 2, "min_size": 8, "max_size": 12,
               "shapes": ["rectangle"]}


@pytest.fixture
def synth_dir(tmp_path) -> Path:
    scene = tmp_path / "scene.json"
    scene.write_text(json.dumps(SMALL_SCENE))
    out = tmp_path / "synth"
    code = app.main(["synth", "-o", str(out), "--samples", "3", "--count", "2",
                     "--scene", str(scene), "--workers", "1"])
    assert code == EXIT_OK
    return out


@pytest.fixture
def fused_dir(tmp_path, synth_dir) -> Path:
    out = tmp_path / "fused"
    code = app.main(["fuse", str(synth_dir), "-o", str(out), "--workers", "1",
                     "--measure", "predictive_entropy", "--measure", "mutual_information"])
    assert code == EXIT_OK
    return out


# ============================================================================
# Exit codes
# ============================================================================

def test_missing_manifest_is_input_error(tmp_path):
    code = app.main(["fuse", str(tmp_path / "nope_manifest.json"), "-o", str(tmp_path / "out")])
    assert code == EXIT_INPUT
    assert not (tmp_path / "out").exists()


def test_directory_without_manifests(tmp_path):
    assert app.main(["fuse", str(tmp_path), "-o", str(tmp_path / "out")]) == EXIT_INPUT


def test_bad_method_is_config_error(tmp_path, synth_dir):
    assert app.main(["fuse", str(synth_dir), "--method", "voting", "-o", str(tmp_path / "o")]) == EXIT_CONFIG


def test_bad_threshold_is_config_error(tmp_path, synth_dir):
    code = app.main(["fuse", str(synth_dir), "--iou-threshold", "1.5", "-o", str(tmp_path / "o")])
    assert code == EXIT_CONFIG


def test_unexpected_failure_removes_partial_outputs(tmp_path, monkeypatch):
    out = tmp_path / "out"

    def boom(run):
        Path(run.output_dir).mkdir(parents=True)
        (Path(run.output_dir) / "half.png").write_bytes(b"x")
        raise RuntimeError("disk on fire")

    monkeypatch.setitem(app.COMMANDS, "fuse", boom)
    assert app.main(["fuse", "anything", "-o", str(out)]) == EXIT_INTERNAL
    assert not out.exists()


def test_failure_keeps_files_that_existed(tmp_path, monkeypatch):
    out = tmp_path / "out"
    out.mkdir()
    (out / "keep.txt").write_text("old")

    def boom(run):
        (Path(run.output_dir) / "new.txt").write_text("new")
        raise RuntimeError("late failure")

    monkeypatch.setitem(app.COMMANDS, "fuse", boom)
    assert app.main(["fuse", "anything", "-o", str(out)]) == EXIT_INTERNAL
    assert sorted(p.name for p in out.iterdir()) == ["keep.txt"]


def test_print_config(tmp_path, capsys):
    settings = tmp_path / "run.json"
    settings.write_text(json.dumps({"min_pixels": 7, "method": "baseline"}))
    code = app.main(["fuse", "x_manifest.json", "--config", str(settings), "--min-pixels", "9",
                     "--print-config"])
    assert code == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    assert printed["method"] == "baseline"
    assert printed["min_pixels"] == 9
    assert printed["min_prob"] == 0.85
    assert printed["inputs"] == ["x_manifest.json"]


def test_no_pruning_flag(capsys):
    assert app.main(["fuse", "a", "--no-pruning", "--print-config"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["pruning"] is False


def test_print_config_leaves_worker_count_open(monkeypatch, capsys):
    monkeypatch.setattr(Config, "WORKERS", 0)
    assert app.main(["fuse", "a", "--print-config"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["workers"] is None


def test_extra_options_travel_in_extra():
    args = app.build_parser().parse_args(["eval", "pred", "--gt-dir", "gt"])
    values = app.cli_values(args)
    assert values["extra"] == {"gt_dir": "gt"}
    assert "gt_dir" not in values


# ============================================================================
# Subcommands
# ============================================================================

def test_synth_outputs(synth_dir):
    for image_id in ("scene_000", "scene_001"):
        for suffix in ("manifest.json", "gt.png", "image.png", "correspondence.csv", "catalog.json"):
            assert (synth_dir / f"{image_id}_{suffix}").exists()
    spec = json.loads((synth_dir / "synth_spec.json").read_text())
    assert spec["samples"] == 3
    assert spec["scene"]["height"] == 48


def test_fuse_report(fused_dir):
    report = json.loads((fused_dir / "report.json").read_text())
    assert [e["image_id"] for e in report["images"]] == ["scene_000", "scene_001"]
    assert sorted(report["images"][0]["uncertainty"]) == ["mutual_information", "predictive_entropy"]


def test_eval_scores_noiseless_fusion(tmp_path, synth_dir, fused_dir):
    out = tmp_path / "eval"
    code = app.main(["eval", str(fused_dir), "--gt-dir", str(synth_dir), "-o", str(out)])
    assert code == EXIT_OK
    data = json.loads((out / "pq.json").read_text())
    assert data["all"]["pq"] == pytest.approx(1.0)
    assert (out / "pq.csv").exists()


def test_eval_needs_gt_dir(tmp_path, fused_dir):
    assert app.main(["eval", str(fused_dir), "-o", str(tmp_path / "eval")]) == EXIT_INPUT


def test_report_without_catalog_is_input_error(tmp_path, synth_dir, fused_dir):
    report_path = fused_dir / "report.json"
    report = json.loads(report_path.read_text())
    report["catalog"] = None
    report_path.write_text(json.dumps(report))
    code = app.main(["eval", str(fused_dir), "--gt-dir", str(synth_dir), "-o", str(tmp_path / "eval")])
    assert code == EXIT_INPUT


def test_sweep_and_hist(tmp_path, synth_dir, fused_dir):
    out = tmp_path / "analysis"
    code = app.main(["sweep", str(fused_dir), "--gt-dir", str(synth_dir), "-o", str(out),
                     "--measure", "predictive_entropy", "--sweep-points", "5"])
    assert code == EXIT_OK
    frame = pd.read_csv(out / "sweep.csv")
    assert set(frame["label"]) == {"predictive_entropy"}
    assert (out / "sweep.png").read_bytes().startswith(b"\x89PNG")
    assert "plotly" in (out / "sweep.html").read_text()
    assert json.loads((out / "sweep.json").read_text())["data"]

    code = app.main(["hist", str(fused_dir), "-o", str(out), "--measure", "mutual_information", "--bins", "8"])
    assert code == EXIT_OK
    hist = pd.read_csv(out / "histogram_mutual_information.csv")
    assert len(hist) == 8
    assert hist["count"].sum() == 2 * 48 * 48


def test_missing_measure_in_report(tmp_path, fused_dir):
    code = app.main(["hist", str(fused_dir), "-o", str(tmp_path / "h"), "--measure", "softmax_entropy"])
    assert code == EXIT_INPUT


def test_corrupt(tmp_path, synth_dir):
    out = tmp_path / "noisy"
    code = app.main(["corrupt", str(synth_dir / "scene_000_image.png"), "--severity", "2", "-o", str(out)])
    assert code == EXIT_OK
    assert (out / "scene_000_image_s2.png").exists()


def test_bench(tmp_path, synth_dir):
    out = tmp_path / "bench"
    code = app.main(["bench", str(synth_dir), "-o", str(out), "--workers", "1",
                     "--methods", "ours", "baseline", "--sample-counts", "1", "3"])
    assert code == EXIT_OK
    frame = pd.read_csv(out / "bench.csv")
    assert sorted(zip(frame["method"], frame["samples"])) == [
        ("baseline", 1), ("baseline", 3), ("ours", 1), ("ours", 3),
    ]
