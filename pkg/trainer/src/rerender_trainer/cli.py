"""Trainer command line: toy scenes, staged training, baseline, inference."""

from __future__ import annotations

from pathlib import Path

import click

from . import formats, inference, stages, toyscene
from .data import cache_for


@click.group()
def main() -> None:
    """Toy-scale neural rerendering trainer."""


def _train_config(g_base, g_blocks, e_base, e_downsamples, d_base, crop, batch_size, seed):
    return stages.TrainConfig(
        g_base=g_base,
        g_max=8 * g_base,
        g_blocks=g_blocks,
        e_base=e_base,
        e_max=8 * e_base,
        e_downsamples=e_downsamples,
        d_base=d_base,
        crop=crop,
        batch_size=batch_size,
        seed=seed,
    )


_shared = [
    click.option("--g-base", default=16, show_default=True),
    click.option("--g-blocks", default=4, show_default=True),
    click.option("--e-base", default=16, show_default=True),
    click.option("--e-downsamples", default=3, show_default=True),
    click.option("--d-base", default=16, show_default=True),
    click.option("--crop", default=None, type=int, help="Random crop size; full frames by default."),
    click.option("--batch-size", default=8, show_default=True),
    click.option("--seed", default=0, show_default=True),
    click.option("--lr", default=2e-4, show_default=True),
]


def shared_options(command):
    for option in reversed(_shared):
        command = option(command)
    return command


@main.command("make-toy-scene")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--images", default=200, show_default=True)
@click.option("--size", default=64, show_default=True)
@click.option("--seed", default=0, show_default=True)
def make_toy_scene_cmd(out, images, size, seed) -> None:
    """Write the procedural two-mode scene (recon, photos, labels)."""
    meta = toyscene.write_toy_scene(out, n_images=images, size=size, seed=seed)
    modes = [v["mode"] for v in meta["images"].values()]
    click.echo(f"wrote {images} images ({modes.count('bright')} bright, "
               f"{modes.count('dark')} dark) under {out}")


@main.command("stages")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--triplets", "triplets_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--epochs", nargs=3, type=int, default=(10, 20, 5), show_default=True,
              help="Epochs for pretrain/renderer/finetune.")
@shared_options
def stages_cmd(manifest_path, triplets_path, out, epochs, g_base, g_blocks, e_base,
               e_downsamples, d_base, crop, batch_size, seed, lr) -> None:
    """Run the three training stages in order and checkpoint each."""
    manifest = formats.read_manifest(manifest_path)
    _, triplets = formats.read_triplets(triplets_path)
    cfg = _train_config(g_base, g_blocks, e_base, e_downsamples, d_base, crop, batch_size, seed)
    schedule = stages.StageSchedule(epochs=tuple(epochs), lr=lr)
    result = stages.run_stages(manifest, triplets, cfg, schedule, out_dir=out)
    click.echo(f"stage hashes: {result.encoder_hash_after_stage1[:12]} "
               f"{result.encoder_hash_after_stage2[:12]} {result.encoder_hash_after_stage3[:12]}")
    click.echo(f"checkpoints and loss CSVs under {out}")


@main.command("baseline")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--epochs", default=15, show_default=True)
@shared_options
def baseline_cmd(manifest_path, out, epochs, g_base, g_blocks, e_base,
                 e_downsamples, d_base, crop, batch_size, seed, lr) -> None:
    """Train the cross-cycle multimodal baseline (single stage)."""
    manifest = formats.read_manifest(manifest_path)
    cfg = _train_config(g_base, g_blocks, e_base, e_downsamples, d_base, crop, batch_size, seed)
    schedule = stages.StageSchedule(lr=lr)
    stages.train_baseline(manifest, cfg, schedule, epochs=epochs, out_dir=out)
    click.echo(f"baseline checkpoint under {out}")


@main.command("semantic")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--epochs", default=10, show_default=True)
@shared_options
def semantic_cmd(manifest_path, out, epochs, g_base, g_blocks, e_base,
                 e_downsamples, d_base, crop, batch_size, seed, lr) -> None:
    """Train the semantic prediction network (transient-masked loss)."""
    manifest = formats.read_manifest(manifest_path)
    cfg = _train_config(g_base, g_blocks, e_base, e_downsamples, d_base, crop, batch_size, seed)
    schedule = stages.StageSchedule(lr=lr)
    stages.train_semantic_predictor(manifest, cfg, schedule, epochs=epochs, out_dir=out)
    click.echo(f"semantic predictor checkpoint under {out}")


@main.command("export-embeddings")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--split", type=click.Choice(["train", "val", "all"]), default="all",
              show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def export_embeddings_cmd(manifest_path, checkpoint, split, out) -> None:
    """Write (image_id, 8-float z) JSON lines for the chosen split."""
    manifest = formats.read_manifest(manifest_path)
    encoder, _, _ = stages.load_checkpoint(checkpoint)
    cache = cache_for(manifest, split)
    inference.export_embeddings(encoder, cache, out)
    click.echo(f"wrote {len(cache)} embeddings to {out}")


@main.command("render-path")
@click.option("--buffers", required=True, type=click.Path(exists=True, file_okay=False),
              help="Directory of NRDB buffers, one per path viewpoint (or one, repeated).")
@click.option("--z-from", "z_from", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Photo whose appearance starts the schedule.")
@click.option("--z-to", "z_to", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Photo whose appearance ends the schedule.")
@click.option("--frames", default=11, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
def render_path_cmd(buffers, z_from, z_to, frames, out, checkpoint) -> None:
    """Render a camera path while interpolating the appearance vector.

    The first buffer pairs with --z-from and the last with --z-to for
    encoding the endpoint appearances.
    """
    encoder, renderer, _ = stages.load_checkpoint(checkpoint)
    buffer_paths = sorted(Path(buffers).glob("*.nrdb"))
    if not buffer_paths:
        raise click.ClickException(f"no .nrdb buffers under {buffers}")
    tensors = [inference.load_buffer_tensor(p) for p in buffer_paths]
    z_start = encoder.encode(inference.load_photo_tensor(z_from)[None], tensors[0][None])[0]
    z_end = encoder.encode(inference.load_photo_tensor(z_to)[None], tensors[-1][None])[0]
    frames_out = inference.render_path(renderer, encoder, tensors, z_start, z_end, frames)
    paths = inference.write_frames(frames_out, out)
    click.echo(f"wrote {len(paths)} frames to {out}")


if __name__ == "__main__":
    main()
