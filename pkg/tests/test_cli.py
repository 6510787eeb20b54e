"""CLI tests: subcommand wiring, exit codes, help defaults, serve."""

import argparse
import json
import shutil
import signal
import socket
import subprocess
import sys
import time
import urllib.request

import numpy as np
import pytest

from chopnet import cli, tiling
from chopnet.dataset import MANIFEST_NAME, load_manifest

COLORS = [(200, 60, 60), (60, 200, 60), (60, 60, 200), (180, 180, 70)]
NAMES = ["red", "green", "blue", "yellow"]


def call(argv):
    """Run the CLI in-process; argparse exits surface as their code."""
    try:
        return cli.main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code or 0


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(0)
    for name, base in zip(NAMES, COLORS):
        img = np.clip(rng.normal(base, 14, size=(72, 72, 3)),
                      0, 255).astype(np.uint8)
        tiling.save_png(img, root / f"{name}.png")
    comp = np.zeros((128, 128, 3))
    for q, base in enumerate(COLORS):
        r, c = divmod(q, 2)
        comp[r * 64:(r + 1) * 64, c * 64:(c + 1) * 64] = rng.normal(
            base, 14, size=(64, 64, 3))
    tiling.save_png(np.clip(comp, 0, 255).astype(np.uint8),
                    root / "comp.png")
    (root / "regions.json").write_text(json.dumps([
        {"name": "tl", "label": 0, "rect": [0, 0, 64, 64]},
        {"name": "tr", "label": 1, "rect": [64, 0, 64, 64]},
        {"name": "bl", "label": 2, "rect": [0, 64, 64, 64]},
        {"name": "br", "label": 3, "rect": [64, 64, 64, 64]},
    ]))
    return root


@pytest.fixture(scope="module")
def dataset_dir(workdir):
    ds = workdir / "ds"
    argv = ["build-dataset", "--dataset-dir", ds,
            "--tile-size", 16, "--seed", 3]
    for label, name in enumerate(NAMES):
        argv += ["--source", f"{workdir / name}.png:{label}"]
    assert call(argv) == 0
    return ds


@pytest.fixture(scope="module")
def run_dir(dataset_dir, workdir):
    out = workdir / "run"
    assert call(["train", "--dataset-dir", dataset_dir, "--out-dir", out,
                 "--epochs", 2, "--batch-size", 32, "--seed", 1]) == 0
    return out


@pytest.fixture(scope="module")
def classified(run_dir, workdir):
    assert call(["classify", "--checkpoint", run_dir / "epoch_2.ckpt",
                 "--image", workdir / "comp.png",
                 "--out-overlay", workdir / "overlay.png",
                 "--out-predictions", workdir / "preds.json"]) == 0
    return workdir


# --- chop ---

def test_chop_reports_grid_and_writes_tiles(workdir, capsys):
    out = workdir / "chopped"
    assert call(["chop", "--image", workdir / "red.png", "--out-dir", out,
                 "--tile-size", 16]) == 0
    assert capsys.readouterr().out.strip() == "8 x 8 = 64 tiles"
    tiles = sorted(out.glob("*.png"))
    assert len(tiles) == 64
    assert (out / "red_r0_c0.png").exists()
    assert (out / "red_r7_c7.png").exists()


def test_chop_tile_sized_image_is_one_tile(tmp_path, capsys):
    img = np.full((56, 56, 3), 80, dtype=np.uint8)
    tiling.save_png(img, tmp_path / "one.png")
    assert call(["chop", "--image", tmp_path / "one.png",
                 "--out-dir", tmp_path / "out"]) == 0
    assert capsys.readouterr().out.strip() == "1 x 1 = 1 tiles"


def test_chop_missing_file_exits_1(tmp_path, capsys):
    assert call(["chop", "--image", tmp_path / "absent.png",
                 "--out-dir", tmp_path / "out"]) == 1
    assert "error" in capsys.readouterr().err


def test_chop_image_smaller_than_tile_exits_1(tmp_path, capsys):
    tiling.save_png(np.zeros((10, 10, 3), dtype=np.uint8),
                    tmp_path / "tiny.png")
    assert call(["chop", "--image", tmp_path / "tiny.png",
                 "--out-dir", tmp_path / "out", "--tile-size", 16]) == 1
    assert "error" in capsys.readouterr().err


# --- build-dataset ---

def test_build_dataset_manifest_contents(dataset_dir):
    manifest = load_manifest(dataset_dir / MANIFEST_NAME)
    assert [c.name for c in manifest.classes] == ["POL", "TRA", "HYP",
                                                  "NOM"]
    assert manifest.seed == 3
    assert manifest.tile_size == 16
    assert len(manifest.channel_means) == 3
    # 72px source, 16px tiles, stride 8: an 8x8 grid per source
    assert len(manifest.records) == 4 * 64


def test_build_dataset_val_fraction_quarter(dataset_dir):
    manifest = load_manifest(dataset_dir / MANIFEST_NAME)
    for label in range(4):
        val = sum(1 for r in manifest.records
                  if r.label == label and r.split == "val")
        assert val == 16  # round(0.25 * 64)


def test_build_dataset_reject_list_applied(workdir, dataset_dir, capsys):
    manifest = load_manifest(dataset_dir / MANIFEST_NAME)
    drop = sorted(r.tile_id for r in manifest.records)[:10]
    rejects = workdir / "drop.txt"
    rejects.write_text("\n".join(drop) + "\n")
    ds = workdir / "ds_rejected"
    argv = ["build-dataset", "--dataset-dir", ds, "--tile-size", 16,
            "--seed", 3, "--reject-list", rejects]
    for label, name in enumerate(NAMES):
        argv += ["--source", f"{workdir / name}.png:{label}"]
    assert call(argv) == 0
    rebuilt = load_manifest(ds / MANIFEST_NAME)
    rejected = {r.tile_id for r in rebuilt.records if r.rejected}
    assert rejected == set(drop)
    assert all(r.split == "none" for r in rebuilt.records if r.rejected)


def test_build_dataset_rejecting_everything_exits_1(workdir, dataset_dir,
                                                    capsys):
    manifest = load_manifest(dataset_dir / MANIFEST_NAME)
    rejects = workdir / "drop_all.txt"
    rejects.write_text("\n".join(r.tile_id for r in manifest.records))
    argv = ["build-dataset", "--dataset-dir", workdir / "ds_empty",
            "--tile-size", 16, "--reject-list", rejects]
    for label, name in enumerate(NAMES):
        argv += ["--source", f"{workdir / name}.png:{label}"]
    assert call(argv) == 1
    assert "usable" in capsys.readouterr().err


def test_build_dataset_bad_source_spec_exits_1(workdir, capsys):
    assert call(["build-dataset", "--dataset-dir", workdir / "ds_bad",
                 "--source", "red.png"]) == 1
    assert "image.png:LABEL" in capsys.readouterr().err


def test_build_dataset_unknown_label_exits_1(workdir, capsys):
    assert call(["build-dataset", "--dataset-dir", workdir / "ds_bad2",
                 "--tile-size", 16,
                 "--source", f"{workdir / 'red.png'}:9"]) == 1
    assert "label 9" in capsys.readouterr().err


# --- train ---

def test_train_writes_snapshots_metrics_and_sidecar(run_dir):
    assert sorted(p.name for p in run_dir.glob("*.ckpt")) == [
        "epoch_1.ckpt", "epoch_2.ckpt"]
    lines = (run_dir / "metrics.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss,val_accuracy,lr"
    assert len(lines) == 3
    sidecar = json.loads((run_dir / "preprocess.json").read_text())
    assert sidecar["tile_size"] == 16
    assert len(sidecar["channel_means"]) == 3


def test_train_single_epoch_single_snapshot(dataset_dir, tmp_path):
    out = tmp_path / "run1"
    assert call(["train", "--dataset-dir", dataset_dir, "--out-dir", out,
                 "--epochs", 1, "--batch-size", 64]) == 0
    assert [p.name for p in out.glob("*.ckpt")] == ["epoch_1.ckpt"]
    assert len((out / "metrics.csv").read_text().splitlines()) == 2


def test_train_bad_config_key_exits_1_naming_it(dataset_dir, tmp_path,
                                                capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("learning_rate = 0.1\n")
    assert call(["train", "--dataset-dir", dataset_dir, "--config", cfg,
                 "--out-dir", tmp_path / "out"]) == 1
    assert "learning_rate" in capsys.readouterr().err


def test_train_flag_overrides_config_file(dataset_dir, tmp_path):
    cfg = tmp_path / "one.cfg"
    cfg.write_text("epochs = 1\nbatch_size = 64\n")
    out = tmp_path / "run_override"
    assert call(["train", "--dataset-dir", dataset_dir, "--config", cfg,
                 "--out-dir", out, "--epochs", 2]) == 0
    assert sorted(p.name for p in out.glob("*.ckpt")) == [
        "epoch_1.ckpt", "epoch_2.ckpt"]


def test_train_divergence_exits_2(dataset_dir, tmp_path, capsys):
    assert call(["train", "--dataset-dir", dataset_dir,
                 "--out-dir", tmp_path / "boom", "--epochs", 3,
                 "--batch-size", 32, "--base-lr", 1e6]) == 2
    assert "epoch" in capsys.readouterr().err


# --- classify ---

def test_classify_prediction_count_matches_grid(classified):
    doc = json.loads((classified / "preds.json").read_text())
    grid = tiling.plan_grid(128, 128, 16, 0.5)
    assert len(doc["entries"]) == grid.tile_count
    assert doc["grid"]["cols"] == grid.cols
    assert doc["grid"]["rows"] == grid.rows
    overlay = tiling.load_image(classified / "overlay.png")
    assert overlay.shape == (128, 128, 3)


def test_classify_impossible_confidence_keeps_image_unchanged(
        run_dir, workdir, tmp_path):
    out = tmp_path / "plain.png"
    assert call(["classify", "--checkpoint", run_dir / "epoch_2.ckpt",
                 "--image", workdir / "comp.png", "--out-overlay", out,
                 "--out-predictions", tmp_path / "p.json",
                 "--min-confidence", 1.01]) == 0
    original = tiling.load_image(workdir / "comp.png")
    assert np.array_equal(tiling.load_image(out), original)


def test_classify_tile_size_mismatch_exits_1(run_dir, workdir, tmp_path,
                                             capsys):
    assert call(["classify", "--checkpoint", run_dir / "epoch_2.ckpt",
                 "--image", workdir / "comp.png",
                 "--out-overlay", tmp_path / "o.png",
                 "--out-predictions", tmp_path / "p.json",
                 "--tile-size", 28]) == 1
    assert "expects" in capsys.readouterr().err


def test_classify_channel_means_flag(run_dir, workdir, tmp_path):
    assert call(["classify", "--checkpoint", run_dir / "epoch_2.ckpt",
                 "--image", workdir / "comp.png",
                 "--out-overlay", tmp_path / "o.png",
                 "--out-predictions", tmp_path / "p.json",
                 "--channel-means", "120.5,118.0,99.25"]) == 0


@pytest.mark.parametrize("means", ["1,2", "a,b,c", "1,2,3,4"])
def test_classify_malformed_channel_means_exits_1(run_dir, workdir,
                                                  tmp_path, capsys, means):
    assert call(["classify", "--checkpoint", run_dir / "epoch_2.ckpt",
                 "--image", workdir / "comp.png",
                 "--out-overlay", tmp_path / "o.png",
                 "--out-predictions", tmp_path / "p.json",
                 "--channel-means", means]) == 1
    assert "channel-means" in capsys.readouterr().err


def test_classify_without_any_means_source_exits_1(run_dir, workdir,
                                                   tmp_path, capsys):
    lone = tmp_path / "lone.ckpt"
    shutil.copy(run_dir / "epoch_2.ckpt", lone)
    assert call(["classify", "--checkpoint", lone,
                 "--image", workdir / "comp.png",
                 "--out-overlay", tmp_path / "o.png",
                 "--out-predictions", tmp_path / "p.json"]) == 1
    assert "channel means not found" in capsys.readouterr().err


def test_classify_means_from_manifest_flag(run_dir, workdir, dataset_dir,
                                           tmp_path):
    lone = tmp_path / "lone.ckpt"
    shutil.copy(run_dir / "epoch_2.ckpt", lone)
    assert call(["classify", "--checkpoint", lone,
                 "--image", workdir / "comp.png",
                 "--out-overlay", tmp_path / "o.png",
                 "--out-predictions", tmp_path / "p.json",
                 "--manifest", dataset_dir / MANIFEST_NAME]) == 0


# --- evaluate ---

def write_oracle_predictions(path):
    grid = tiling.plan_grid(128, 128, 16, 0.5)
    entries = []
    for i in range(grid.tile_count):
        row, col = divmod(i, grid.cols)
        cx, cy = tiling.tile_center(grid, (row, col))
        label = (2 if cy >= 64 else 0) + (1 if cx >= 64 else 0)
        probs = [1.0 if k == label else 0.0 for k in range(4)]
        entries.append([label, 1.0, probs])
    doc = {
        "grid": {"tile_size": grid.tile_size,
                 "overlap_fraction": grid.overlap_fraction,
                 "stride": grid.stride, "cols": grid.cols,
                 "rows": grid.rows},
        "class_names": ["POL", "TRA", "HYP", "NOM"],
        "entries": entries,
    }
    path.write_text(json.dumps(doc))


def test_evaluate_oracle_predictions_are_perfect(workdir, tmp_path):
    preds = tmp_path / "oracle.json"
    write_oracle_predictions(preds)
    report_path = tmp_path / "report.json"
    assert call(["evaluate", "--predictions", preds,
                 "--regions", workdir / "regions.json",
                 "--samples", 50, "--seed", 4,
                 "--out-report", report_path]) == 0
    report = json.loads(report_path.read_text())
    assert all(r["accuracy"] == 1.0 for r in report["per_region"])
    assert all(v == 1.0 for v in report["per_class"].values())
    assert all(v == 1.0 for v in report["exhaustive"].values())


def test_evaluate_same_seed_same_bytes(classified, workdir, tmp_path):
    reports = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        assert call(["evaluate", "--predictions", classified / "preds.json",
                     "--regions", workdir / "regions.json",
                     "--samples", 100, "--seed", 7,
                     "--out-report", out]) == 0
        reports.append(out.read_bytes())
    assert reports[0] == reports[1]


def test_evaluate_region_outside_image_exits_1(classified, workdir,
                                               tmp_path, capsys):
    regions = tmp_path / "outside.json"
    regions.write_text(json.dumps(
        [{"name": "off", "label": 0, "rect": [500, 500, 64, 64]}]))
    assert call(["evaluate", "--predictions", classified / "preds.json",
                 "--regions", regions,
                 "--out-report", tmp_path / "r.json"]) == 1
    assert "off" in capsys.readouterr().err


# --- serve ---

def free_port():
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    return port


def wait_for_http(port, timeout=15.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        try:
            with urllib.request.urlopen(
                    f"http://127.0.0.1:{port}/api/classes",
                    timeout=1) as resp:
                return json.loads(resp.read())
        except Exception:
            time.sleep(0.1)
    raise RuntimeError(f"service on port {port} never came up")


def test_serve_answers_then_exits_0_on_sigint(dataset_dir):
    port = free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "chopnet.cli", "serve",
         "--dataset-dir", str(dataset_dir), "--port", str(port)])
    try:
        body = wait_for_http(port)
        assert body["classes"][0] == {"id": 0, "name": "POL"}
    finally:
        proc.send_signal(signal.SIGINT)
    assert proc.wait(timeout=15) == 0


def test_serve_busy_port_exits_1(dataset_dir):
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    sock.listen(1)
    port = sock.getsockname()[1]
    try:
        proc = subprocess.run(
            [sys.executable, "-m", "chopnet.cli", "serve",
             "--dataset-dir", str(dataset_dir), "--port", str(port)],
            capture_output=True, text=True, timeout=30)
    finally:
        sock.close()
    assert proc.returncode == 1


def test_serve_missing_manifest_exits_1(tmp_path, capsys):
    assert call(["serve", "--dataset-dir", tmp_path / "void",
                 "--port", free_port()]) == 1
    assert "manifest" in capsys.readouterr().err


# --- parser contract ---

def test_unknown_subcommand_exits_1():
    assert call(["frobnicate"]) == 1


def test_missing_required_flag_exits_1(capsys):
    assert call(["chop", "--image", "x.png"]) == 1
    assert "--out-dir" in capsys.readouterr().err


def test_every_flag_has_a_long_form():
    parser = cli.build_parser()
    sub = next(a for a in parser._actions
               if isinstance(a, argparse._SubParsersAction))
    for name, sp in sub.choices.items():
        for action in sp._actions:
            assert any(s.startswith("--") for s in action.option_strings), \
                (name, action.option_strings)


def subcommand_help(capsys, command):
    with pytest.raises(SystemExit) as exc:
        cli.main([command, "--help"])
    assert exc.value.code == 0
    # undo argparse line wrapping so defaults are one searchable string
    return " ".join(capsys.readouterr().out.split())


def test_help_defaults_match_solver_table(capsys):
    text = subcommand_help(capsys, "train")
    for needle in ["(default: 30)", "(default: 64)", "(default: SGD)",
                   "(default: 0.01)", "(default: step_down)",
                   "(default: 33)", "(default: 0.1)", "(default: 0.9)",
                   "(default: 0.0005)"]:
        assert needle in text, needle


def test_help_defaults_for_geometry_and_sampling(capsys):
    chop_text = subcommand_help(capsys, "chop")
    assert "(default: 56)" in chop_text
    assert "(default: 0.5)" in chop_text
    build_text = subcommand_help(capsys, "build-dataset")
    assert "(default: 0.25)" in build_text
    classify_text = subcommand_help(capsys, "classify")
    assert "(default: 0.0)" in classify_text
    evaluate_text = subcommand_help(capsys, "evaluate")
    assert "(default: 100)" in evaluate_text
    serve_text = subcommand_help(capsys, "serve")
    assert "(default: 8000)" in serve_text
    assert "(default: 127.0.0.1)" in serve_text
