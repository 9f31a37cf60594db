"""Torch-side loading of aligned samples from the manifest."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image

from .formats import Manifest, Sample, read_nrdb

BUFFER_CHANNELS = 8  # albedo 3 + depth + validity + semantics 3


def load_photo(path) -> torch.Tensor:
    """PNG -> (3, H, W) float tensor in [-1, 1]."""
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(rgb.transpose(2, 0, 1)) * 2.0 - 1.0


def load_buffer(path) -> torch.Tensor:
    """NRDB -> (8, H, W) float tensor in [-1, 1].

    Albedo, validity, and semantic channels are already in [0, 1]; depth is
    raw scene units and is normalized by its per-buffer maximum first.
    """
    planes, names = read_nrdb(path)
    if len(names) != BUFFER_CHANNELS:
        raise ValueError(f"{path}: expected {BUFFER_CHANNELS} channels, got {names}")
    depth = planes[3]
    peak = float(depth.max())
    if peak > 0:
        planes = planes.copy()
        planes[3] = depth / peak
    return torch.from_numpy(planes) * 2.0 - 1.0


def load_label_map(path) -> torch.Tensor:
    with Image.open(path) as img:
        return torch.from_numpy(np.asarray(img, dtype=np.uint8).copy()).long()


@dataclass
class LoadedSample:
    image_id: int
    photo: torch.Tensor  # (3, H, W) in [-1, 1]
    buffer: torch.Tensor  # (8, H, W) in [-1, 1]
    labels: torch.Tensor  # (H, W) long


class SampleCache:
    """All samples of one split resident in memory, indexable by position
    or image id. Toy-scale datasets fit comfortably."""

    def __init__(self, samples: list[Sample]):
        self.samples = list(samples)
        self.loaded = [
            LoadedSample(
                image_id=s.image_id,
                photo=load_photo(s.photo_path),
                buffer=load_buffer(s.deep_buffer_path),
                labels=load_label_map(s.label_map_path),
            )
            for s in self.samples
        ]
        self.by_id = {item.image_id: item for item in self.loaded}

    def __len__(self) -> int:
        return len(self.loaded)

    def __getitem__(self, index: int) -> LoadedSample:
        return self.loaded[index]

    def batch(self, items: list[LoadedSample], crop: int | None,
              rng: np.random.Generator) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Stack (photo, buffer, labels) with a shared random crop per item."""
        photos, buffers, labels = [], [], []
        for item in items:
            photo, buffer, label = item.photo, item.buffer, item.labels
            if crop is not None:
                height, width = photo.shape[1:]
                if crop > height or crop > width:
                    raise ValueError(f"crop {crop} exceeds sample size {height}x{width}")
                top = int(rng.integers(0, height - crop + 1))
                left = int(rng.integers(0, width - crop + 1))
                photo = photo[:, top:top + crop, left:left + crop]
                buffer = buffer[:, top:top + crop, left:left + crop]
                label = label[top:top + crop, left:left + crop]
            photos.append(photo)
            buffers.append(buffer)
            labels.append(label)
        return torch.stack(photos), torch.stack(buffers), torch.stack(labels)


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    """Shuffled index batches; the final short batch is kept."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size].tolist()


def cache_for(manifest: Manifest, split: str) -> SampleCache:
    if split == "train":
        return SampleCache(manifest.train)
    if split == "val":
        return SampleCache(manifest.val)
    if split == "all":
        return SampleCache(manifest.samples)
    raise ValueError(f"unknown split {split!r}")
