"""Command line interface: dataset building, triplet mining, quality reports."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import click

from . import dataset as dataset_mod
from . import io_colmap, quality, report, style


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Scene rerendering toolkit."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command("build-dataset")
@click.option("--recon", required=True, type=click.Path(exists=True, file_okay=False),
              help="Reconstruction directory (cameras/images/points3D files).")
@click.option("--photos", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--labels", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--format", "recon_format", type=click.Choice(["binary", "text"]),
              default="binary", show_default=True)
@click.option("--min-dim", default=600, show_default=True,
              help="Minimum render dimension in pixels.")
@click.option("--empty-threshold", default=0.85, show_default=True,
              help="Discard renders with empty fraction strictly above this.")
@click.option("--min-image-dim", default=450, show_default=True,
              help="Discard photos whose smaller dimension is below this.")
@click.option("--val-count", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--radius", default=1.0, show_default=True, help="Splat radius in pixels.")
@click.option("--footprint", type=click.Choice(["cross", "square"]), default="cross",
              show_default=True)
@click.option("--threads", default=1, show_default=True)
@click.option("--palette", "palette_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Palette JSON; the packaged ADE20K table by default.")
@click.option("--name", default="dataset", show_default=True)
def build_dataset_cmd(recon, photos, labels, out, recon_format, min_dim, empty_threshold,
                      min_image_dim, val_count, seed, radius, footprint, threads,
                      palette_path, name) -> None:
    """Render aligned deep buffers for every registered image."""
    from .labels import load_palette

    reconstruction = io_colmap.parse_reconstruction(recon, recon_format)
    cfg = dataset_mod.BuildConfig(
        min_dim=min_dim,
        empty_threshold=empty_threshold,
        min_image_dim=min_image_dim,
        val_count=val_count,
        seed=seed,
        radius=radius,
        footprint=footprint,
        threads=threads,
    )
    manifest = dataset_mod.build_dataset(
        reconstruction, photos, labels, out, cfg,
        palette=load_palette(palette_path), name=name,
    )
    total = len(manifest.samples)
    click.echo(f"kept {total} samples ({len(manifest.val)} val), skipped {manifest.skipped}")
    click.echo(f"manifest: {Path(out) / 'manifest.jsonl'}")


def _gram_sets_for(samples, manifest_dir: Path, features: str, seed: int):
    gram_sets = []
    for sample in samples:
        if features == "filterbank":
            image = quality.load_image(manifest_dir / sample.photo_path)
            pyramid = style.filterbank_features(image, seed=seed)
        elif features.startswith("nrft:"):
            feature_dir = Path(features[len("nrft:"):])
            pyramid = style.read_nrft(feature_dir / f"{sample.image_id:06d}.nrft")
        else:
            raise click.BadParameter("--features must be 'filterbank' or 'nrft:DIR'")
        gram_sets.append(style.gram_set(pyramid))
    return gram_sets


@main.command("mine-triplets")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--features", default="filterbank", show_default=True,
              help="'filterbank' or 'nrft:DIR' with per-image NRFT files.")
@click.option("--k", default=10, show_default=True, help="Neighbor pool size.")
@click.option("--alpha", default=0.3, show_default=True, help="Separation margin echo.")
@click.option("--n-per-anchor", default=4, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--split", type=click.Choice(["train", "val", "all"]), default="train",
              show_default=True, help="Which manifest split to mine over.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def mine_triplets_cmd(manifest_path, features, k, alpha, n_per_anchor, seed, split, out) -> None:
    """Mine style-based (anchor, positive, negative) triplets."""
    manifest = dataset_mod.read_manifest(manifest_path)
    manifest_dir = Path(manifest_path).parent
    samples = manifest.samples if split == "all" else [
        s for s in manifest.samples if s.split == split
    ]
    cfg = style.TripletConfig(k=k, alpha=alpha, seed=seed, n_per_anchor=n_per_anchor)
    gram_sets = _gram_sets_for(samples, manifest_dir, features, seed)
    triplet_set = style.mine_triplets(
        gram_sets, cfg, image_ids=[s.image_id for s in samples]
    )
    header = {
        "config": {
            "k": cfg.k,
            "alpha": cfg.alpha,
            "seed": cfg.seed,
            "n_per_anchor": cfg.n_per_anchor,
            "features": features,
            "split": split,
        }
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines += [
        json.dumps({"anchor": a, "positive": p, "negative": n}, sort_keys=True)
        for a, p, n in triplet_set.triplets
    ]
    Path(out).write_text("\n".join(lines) + "\n")
    click.echo(f"mined {len(triplet_set.triplets)} triplets over {len(samples)} images -> {out}")


@main.command("metrics")
@click.option("--pred", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--truth", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Report JSON path; a CSV and figures land next to it.")
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.option("--feature-seed", default=0, show_default=True,
              help="Seed for the filterbank perceptual extractor.")
def metrics_cmd(pred, truth, out, figures, feature_seed) -> None:
    """Compare rendered images against ground truth by file name."""
    pred_dir, truth_dir = Path(pred), Path(truth)
    names = sorted(
        {p.name for p in pred_dir.iterdir()} & {p.name for p in truth_dir.iterdir()}
    )
    if not names:
        raise click.ClickException("no file names in common between --pred and --truth")
    extractor = quality.FilterbankExtractor(seed=feature_seed)
    pairs = (
        (name, quality.load_image(pred_dir / name), quality.load_image(truth_dir / name))
        for name in names
    )
    metric_report = quality.compute_report(pairs, extractor)
    written = report.write_report(metric_report, out, figures=figures)
    click.echo(
        f"{len(names)} pairs: L1 {metric_report.mean_l1:.3f}, "
        f"PSNR {metric_report.mean_psnr:.3f} dB, "
        f"perceptual {metric_report.mean_perceptual:.6g} [{metric_report.extractor_tag}]"
    )
    for path in written:
        click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
