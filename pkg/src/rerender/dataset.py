"""Aligned dataset construction: deep buffers paired with photos and labels.

For every registered image the point cloud is splatted at the target render
resolution, the photo and label map are rescaled to match pixelwise, the
encoded semantic channels are appended to the buffer, and the surviving
samples are split into train/val. The manifest is JSON-lines: a header
echoing the configuration and skip counters, then one sample per line in
image-id order. Re-running with identical inputs and seed reproduces the
manifest byte for byte.
"""

from __future__ import annotations

import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .camera import Viewpoint, scale_to_min_dim
from .io_colmap import Camera, CameraModel, Reconstruction
from .labels import Palette, encode_labels, load_label_map, load_palette
from .splat import DeepBuffer, PointCloudView, empty_fraction, render, write_nrdb

logger = logging.getLogger(__name__)

SKIP_REASONS = ("missing_photo", "missing_label", "small_image", "sparse_render")


@dataclass(frozen=True)
class BuildConfig:
    min_dim: int = 600
    empty_threshold: float = 0.85
    min_image_dim: int = 450
    val_count: int = 100
    seed: int = 0
    radius: float = 1.0
    footprint: str = "cross"
    threads: int = 1

    def echo(self) -> dict:
        return {
            "min_dim": self.min_dim,
            "empty_threshold": self.empty_threshold,
            "min_image_dim": self.min_image_dim,
            "val_count": self.val_count,
            "seed": self.seed,
            "radius": self.radius,
            "footprint": self.footprint,
        }


@dataclass(frozen=True)
class AlignedSample:
    image_id: int
    deep_buffer_path: str  # relative to the manifest directory
    photo_path: str
    label_map_path: str
    viewpoint: dict  # rotation, translation, camera at render resolution
    empty_fraction: float
    split: str = "train"

    def to_json(self) -> str:
        return json.dumps(
            {
                "image_id": self.image_id,
                "deep_buffer_path": self.deep_buffer_path,
                "photo_path": self.photo_path,
                "label_map_path": self.label_map_path,
                "viewpoint": self.viewpoint,
                "empty_fraction": self.empty_fraction,
                "split": self.split,
            },
            sort_keys=True,
        )


@dataclass
class Manifest:
    name: str
    config: dict
    skipped: dict[str, int]
    samples: list[AlignedSample] = field(default_factory=list)

    def header_json(self) -> str:
        return json.dumps(
            {
                "dataset": self.name,
                "config": self.config,
                "skipped": self.skipped,
                "num_samples": len(self.samples),
            },
            sort_keys=True,
        )

    def write(self, path: str | Path) -> None:
        lines = [self.header_json()] + [s.to_json() for s in self.samples]
        Path(path).write_text("\n".join(lines) + "\n")

    @property
    def train(self) -> list[AlignedSample]:
        return [s for s in self.samples if s.split == "train"]

    @property
    def val(self) -> list[AlignedSample]:
        return [s for s in self.samples if s.split == "val"]


def read_manifest(path: str | Path) -> Manifest:
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0])
    samples = []
    for line in lines[1:]:
        rec = json.loads(line)
        samples.append(
            AlignedSample(
                image_id=rec["image_id"],
                deep_buffer_path=rec["deep_buffer_path"],
                photo_path=rec["photo_path"],
                label_map_path=rec["label_map_path"],
                viewpoint=rec["viewpoint"],
                empty_fraction=rec["empty_fraction"],
                split=rec["split"],
            )
        )
    return Manifest(header["dataset"], header["config"], header["skipped"], samples)


def split_validation(samples, val_count: int, seed: int):
    """Tag a seeded uniformly random subset of min(val_count, N) samples val.

    Returns new samples in the input order; deterministic given the seed.
    """
    if val_count < 0:
        raise ValueError("val_count must be >= 0")
    n = len(samples)
    chosen = set(random.Random(seed).sample(range(n), min(val_count, n)))
    return [
        replace(s, split="val" if i in chosen else "train") for i, s in enumerate(samples)
    ]


def _viewpoint_dict(viewpoint: Viewpoint) -> dict:
    cam = viewpoint.camera
    return {
        "rotation": list(viewpoint.rotation),
        "translation": list(viewpoint.translation),
        "camera": {
            "model": cam.model.name,
            "width": cam.width,
            "height": cam.height,
            "params": [float(p) for p in cam.params],
        },
    }


def viewpoint_from_dict(rec: dict) -> Viewpoint:
    cam = rec["camera"]
    camera = Camera(0, CameraModel[cam["model"]], cam["width"], cam["height"],
                    np.asarray(cam["params"], dtype=np.float64))
    return Viewpoint(tuple(rec["rotation"]), tuple(rec["translation"]), camera)


def build_dataset(
    recon: Reconstruction,
    photos_dir: str | Path,
    labels_dir: str | Path,
    out_dir: str | Path,
    cfg: BuildConfig = BuildConfig(),
    palette: Palette | None = None,
    name: str = "dataset",
) -> Manifest:
    """Build the aligned dataset under out_dir and write its manifest.

    Photos are matched to registered images by file name; label maps are
    PNGs of class indices named after the photo stem. Missing files skip
    the sample with a warning and a counter rather than failing the build.
    """
    photos_dir = Path(photos_dir)
    labels_dir = Path(labels_dir)
    out_dir = Path(out_dir)
    for sub in ("buffers", "photos", "labels"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    if palette is None:
        palette = load_palette()
    points = PointCloudView.from_reconstruction(recon)
    skipped = {reason: 0 for reason in SKIP_REASONS}

    def process(image_id: int):
        image = recon.images[image_id]
        photo_path = photos_dir / image.name
        if not photo_path.exists():
            logger.warning("image %d: photo %s missing", image_id, photo_path)
            return "missing_photo"
        label_path = labels_dir / (Path(image.name).stem + ".png")
        if not label_path.exists():
            logger.warning("image %d: label map %s missing", image_id, label_path)
            return "missing_label"
        with Image.open(photo_path) as photo:
            if min(photo.size) < cfg.min_image_dim:
                return "small_image"
            photo_rgb = photo.convert("RGB")
            camera = recon.cameras[image.camera_id]
            viewpoint = scale_to_min_dim(
                Viewpoint(tuple(image.qvec), tuple(image.tvec), camera), cfg.min_dim
            )
            buffer = render(points, viewpoint, cfg.radius, cfg.footprint, threads=1)
            fraction = empty_fraction(buffer)
            if fraction > cfg.empty_threshold:
                return "sparse_render"
            size = (viewpoint.camera.width, viewpoint.camera.height)
            photo_out = photo_rgb.resize(size, Image.BILINEAR)
        label_map = load_label_map(label_path)
        label_out = Image.fromarray(label_map, mode="L").resize(size, Image.NEAREST)
        label_resized = np.asarray(label_out, dtype=np.uint8)
        buffer = buffer.with_semantics(encode_labels(label_resized, palette))

        stem = f"{image_id:06d}"
        write_nrdb(buffer, out_dir / "buffers" / f"{stem}.nrdb")
        photo_out.save(out_dir / "photos" / f"{stem}.png")
        label_out.save(out_dir / "labels" / f"{stem}.png")
        return AlignedSample(
            image_id=image_id,
            deep_buffer_path=f"buffers/{stem}.nrdb",
            photo_path=f"photos/{stem}.png",
            label_map_path=f"labels/{stem}.png",
            viewpoint=_viewpoint_dict(viewpoint),
            empty_fraction=fraction,
        )

    image_ids = sorted(recon.images)
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(process, image_ids))
    else:
        results = [process(i) for i in image_ids]

    samples = []
    for result in results:
        if isinstance(result, str):
            skipped[result] += 1
        else:
            samples.append(result)
    samples = split_validation(samples, cfg.val_count, cfg.seed)

    manifest = Manifest(name=name, config=cfg.echo(), skipped=skipped, samples=samples)
    manifest.write(out_dir / "manifest.jsonl")
    return manifest
