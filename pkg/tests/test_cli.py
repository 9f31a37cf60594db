"""End-to-end runs of the command line interface."""

import json

import numpy as np
from click.testing import CliRunner
from PIL import Image

from rerender.cli import main

from conftest import make_mini_scene


def run(args):
    result = CliRunner().invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


def test_build_mine_metrics_pipeline(tmp_path):
    recon_dir, photos_dir, labels_dir = make_mini_scene(tmp_path, n_images=8)
    out = tmp_path / "dataset"
    result = run([
        "build-dataset",
        "--recon", str(recon_dir),
        "--photos", str(photos_dir),
        "--labels", str(labels_dir),
        "--out", str(out),
        "--min-dim", "60",
        "--val-count", "2",
        "--seed", "3",
    ])
    assert "kept 8 samples" in result.output
    manifest_path = out / "manifest.jsonl"
    assert manifest_path.exists()

    triplets_path = tmp_path / "triplets.jsonl"
    result = run([
        "mine-triplets",
        "--manifest", str(manifest_path),
        "--k", "2",
        "--n-per-anchor", "2",
        "--seed", "5",
        "--out", str(triplets_path),
    ])
    lines = triplets_path.read_text().splitlines()
    header = json.loads(lines[0])
    assert header["config"]["k"] == 2
    assert header["config"]["features"] == "filterbank"
    triplets = [json.loads(line) for line in lines[1:]]
    assert len(triplets) == 6 * 2  # 6 train samples, 2 per anchor
    sample_ids = {
        json.loads(line)["image_id"]
        for line in manifest_path.read_text().splitlines()[1:]
    }
    for t in triplets:
        assert {t["anchor"], t["positive"], t["negative"]} <= sample_ids

    # second mining run is identical
    second = tmp_path / "triplets2.jsonl"
    run(["mine-triplets", "--manifest", str(manifest_path), "--k", "2",
         "--n-per-anchor", "2", "--seed", "5", "--out", str(second)])
    assert second.read_bytes() == triplets_path.read_bytes()


def test_mine_triplets_nrft_features(tmp_path):
    from rerender import read_manifest, write_nrft

    recon_dir, photos_dir, labels_dir = make_mini_scene(tmp_path, n_images=5)
    out = tmp_path / "dataset"
    run(["build-dataset", "--recon", str(recon_dir), "--photos", str(photos_dir),
         "--labels", str(labels_dir), "--out", str(out), "--min-dim", "60",
         "--val-count", "0", "--seed", "1"])

    rng = np.random.default_rng(0)
    feature_dir = tmp_path / "features"
    feature_dir.mkdir()
    for sample in read_manifest(out / "manifest.jsonl").samples:
        pyramid = [rng.random((4, 6, 6)).astype(np.float32) for _ in range(2)]
        write_nrft(pyramid, feature_dir / f"{sample.image_id:06d}.nrft")

    triplets_path = tmp_path / "triplets.jsonl"
    run(["mine-triplets", "--manifest", str(out / "manifest.jsonl"),
         "--features", f"nrft:{feature_dir}", "--k", "1", "--seed", "2",
         "--out", str(triplets_path)])
    assert len(triplets_path.read_text().splitlines()) == 1 + 5 * 4


def test_metrics_report_with_figures(tmp_path):
    rng = np.random.default_rng(1)
    pred_dir = tmp_path / "pred"
    truth_dir = tmp_path / "truth"
    pred_dir.mkdir()
    truth_dir.mkdir()
    for i in range(4):
        truth = rng.integers(0, 256, size=(24, 24, 3)).astype(np.uint8)
        noisy = np.clip(truth.astype(int) + rng.integers(-20, 20, truth.shape), 0, 255)
        Image.fromarray(truth, "RGB").save(truth_dir / f"{i}.png")
        Image.fromarray(noisy.astype(np.uint8), "RGB").save(pred_dir / f"{i}.png")

    out = tmp_path / "report" / "report.json"
    result = run(["metrics", "--pred", str(pred_dir), "--truth", str(truth_dir),
                  "--out", str(out)])
    assert "4 pairs" in result.output

    report = json.loads(out.read_text())
    assert report["extractor"] == "filterbank-seed0"
    assert len(report["per_image"]) == 4
    assert set(report["mean"]) == {"l1", "psnr", "perceptual"}

    csv_lines = (out.parent / "report.csv").read_text().splitlines()
    assert csv_lines[0] == "name,l1,psnr,perceptual"
    assert len(csv_lines) == 5
    for metric in ("l1", "psnr", "perceptual"):
        assert (out.parent / f"report_{metric}.png").exists()


def test_metrics_no_common_files_errors(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    result = CliRunner().invoke(
        main, ["metrics", "--pred", str(tmp_path / "a"), "--truth", str(tmp_path / "b"),
               "--out", str(tmp_path / "r.json")],
    )
    assert result.exit_code != 0
    assert "no file names in common" in result.output
