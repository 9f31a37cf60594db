"""Readers for the dataset toolkit's wire formats.

The trainer talks to the data toolkit only through its published files:
the JSON-lines manifest, NRDB deep-buffer containers, JSON-lines triplet
files, and the palette JSON. These readers implement those formats
directly from their documented layouts.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

NRDB_MAGIC = b"NRDB"
INVALID_POINT3D_ID = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class Sample:
    image_id: int
    deep_buffer_path: Path
    photo_path: Path
    label_map_path: Path
    viewpoint: dict
    empty_fraction: float
    split: str


@dataclass
class Manifest:
    name: str
    config: dict
    skipped: dict
    samples: list[Sample]

    @property
    def train(self) -> list[Sample]:
        return [s for s in self.samples if s.split == "train"]

    @property
    def val(self) -> list[Sample]:
        return [s for s in self.samples if s.split == "val"]

    def by_id(self, image_id: int) -> Sample:
        for sample in self.samples:
            if sample.image_id == image_id:
                return sample
        raise KeyError(f"image id {image_id} not in manifest")


def read_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    base = path.parent
    lines = path.read_text().splitlines()
    header = json.loads(lines[0])
    samples = []
    for line in lines[1:]:
        rec = json.loads(line)
        samples.append(
            Sample(
                image_id=rec["image_id"],
                deep_buffer_path=base / rec["deep_buffer_path"],
                photo_path=base / rec["photo_path"],
                label_map_path=base / rec["label_map_path"],
                viewpoint=rec["viewpoint"],
                empty_fraction=rec["empty_fraction"],
                split=rec["split"],
            )
        )
    return Manifest(header["dataset"], header["config"], header["skipped"], samples)


def read_nrdb(path: str | Path) -> tuple[np.ndarray, tuple[str, ...]]:
    """NRDB container -> ((C, H, W) float32 planes, channel names)."""
    data = Path(path).read_bytes()
    if data[:4] != NRDB_MAGIC:
        raise ValueError(f"{path}: not an NRDB container")
    version, height, width, channel_count = struct.unpack_from("<IIII", data, 4)
    if version != 1:
        raise ValueError(f"{path}: unsupported NRDB version {version}")
    pos = 20
    names = []
    for _ in range(channel_count):
        (length,) = struct.unpack_from("<I", data, pos)
        pos += 4
        names.append(data[pos:pos + length].decode("utf-8"))
        pos += length
    count = channel_count * height * width
    if len(data) - pos < 4 * count:
        raise ValueError(f"{path}: truncated NRDB payload")
    planes = np.frombuffer(data, dtype="<f4", count=count, offset=pos)
    return planes.reshape(channel_count, height, width).copy(), tuple(names)


def read_triplets(path: str | Path) -> tuple[dict, list[tuple[int, int, int]]]:
    """Triplet JSON-lines -> (config echo, list of id triples)."""
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0])
    triplets = []
    for line in lines[1:]:
        rec = json.loads(line)
        triplets.append((rec["anchor"], rec["positive"], rec["negative"]))
    return header.get("config", {}), triplets


def read_palette(path: str | Path) -> tuple[tuple[str, ...], np.ndarray]:
    entries = sorted(json.loads(Path(path).read_text()), key=lambda e: e["class_id"])
    names = tuple(e["name"] for e in entries)
    colors = np.array([e["rgb"] for e in entries], dtype=np.uint8)
    return names, colors


def write_embeddings(path: str | Path, rows) -> None:
    """JSON-lines of (image_id, 8-float appearance embedding)."""
    lines = [
        json.dumps({"image_id": int(image_id), "z": [float(v) for v in z]}, sort_keys=True)
        for image_id, z in rows
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_embeddings(path: str | Path) -> dict[int, np.ndarray]:
    out = {}
    for line in Path(path).read_text().splitlines():
        rec = json.loads(line)
        out[rec["image_id"]] = np.asarray(rec["z"], dtype=np.float64)
    return out
