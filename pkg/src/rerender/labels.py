"""Semantic label maps: palette encoding and transient masks.

Label maps are (H, W) uint8 arrays of class indices in [0, 149], with 255
marking unlabeled pixels. The 150-class palette ships as a JSON asset and
maps each class to a distinct RGB color; unlabeled pixels encode to black.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image

NUM_CLASSES = 150
UNLABELED = 255

# The published transient list is not part of the interchange files; this
# default covers the usual movable categories and is configurable everywhere
# a mask is produced.
DEFAULT_TRANSIENT_CLASSES = (
    "person", "car", "bus", "truck", "van",
    "minibike", "bicycle", "boat", "airplane", "animal",
)


class LabelError(ValueError):
    pass


@dataclass(frozen=True)
class Palette:
    names: tuple[str, ...]
    colors: np.ndarray  # (150, 3) uint8

    def __post_init__(self) -> None:
        object.__setattr__(self, "colors", np.asarray(self.colors, dtype=np.uint8))
        if len(self.names) != NUM_CLASSES or self.colors.shape != (NUM_CLASSES, 3):
            raise LabelError(f"palette must define exactly {NUM_CLASSES} classes")
        unique = {tuple(int(v) for v in c) for c in self.colors}
        if len(unique) != NUM_CLASSES:
            raise LabelError("palette colors must be distinct")
        if (0, 0, 0) in unique:
            raise LabelError("black is reserved for unlabeled pixels")

    def class_id(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise LabelError(f"unknown class name {name!r}") from None

    def class_ids(self, names) -> frozenset[int]:
        return frozenset(self.class_id(n) for n in names)


def load_palette(path: str | Path | None = None) -> Palette:
    """Load a palette JSON asset ({class_id, name, rgb} entries); the
    packaged ADE20K table is used when no path is given."""
    if path is None:
        text = resources.files("rerender").joinpath("assets/ade20k_palette.json").read_text()
    else:
        text = Path(path).read_text()
    entries = sorted(json.loads(text), key=lambda e: e["class_id"])
    if [e["class_id"] for e in entries] != list(range(len(entries))):
        raise LabelError("palette class ids must be contiguous from 0")
    names = tuple(e["name"] for e in entries)
    colors = np.array([e["rgb"] for e in entries], dtype=np.uint8)
    return Palette(names, colors)


def validate_label_map(label_map: np.ndarray) -> np.ndarray:
    label_map = np.asarray(label_map)
    if label_map.ndim != 2 or label_map.dtype != np.uint8:
        raise LabelError("label map must be a 2-D uint8 array")
    bad = (label_map >= NUM_CLASSES) & (label_map != UNLABELED)
    if np.any(bad):
        raise LabelError(
            f"class out of range: {sorted(int(v) for v in np.unique(label_map[bad]))}"
        )
    return label_map


def load_label_map(path: str | Path) -> np.ndarray:
    """Read a single-channel 8-bit PNG of class indices."""
    with Image.open(path) as img:
        if img.mode not in ("L", "P"):
            raise LabelError(f"{path}: expected single-channel label PNG, got mode {img.mode}")
        return validate_label_map(np.asarray(img, dtype=np.uint8))


def encode_labels(label_map: np.ndarray, palette: Palette) -> np.ndarray:
    """Map class indices to the palette colors as (3, H, W) floats in [0, 1].

    Unlabeled pixels map to black; values in [150, 254] are an error.
    """
    label_map = validate_label_map(label_map)
    lut = np.zeros((256, 3), dtype=np.float32)
    lut[:NUM_CLASSES] = palette.colors.astype(np.float32) / np.float32(255)
    return lut[label_map].transpose(2, 0, 1)


def decode_labels(encoded: np.ndarray, palette: Palette) -> np.ndarray:
    """Invert encode_labels; black recovers the unlabeled sentinel."""
    encoded = np.asarray(encoded)
    if encoded.ndim != 3 or encoded.shape[0] != 3:
        raise LabelError("encoded labels must be (3, H, W)")
    rgb = np.clip(np.rint(encoded.astype(np.float64) * 255.0), 0, 255).astype(np.uint32)
    packed = (rgb[0] << 16) | (rgb[1] << 8) | rgb[2]
    colors = palette.colors.astype(np.uint32)
    keys = (colors[:, 0] << 16) | (colors[:, 1] << 8) | colors[:, 2]
    lookup = {int(key): cid for cid, key in enumerate(keys)}
    lookup[0] = UNLABELED
    out = np.empty(packed.shape, dtype=np.uint8)
    for value in np.unique(packed):
        if int(value) not in lookup:
            raise LabelError(f"color {int(value):06x} not in palette")
        out[packed == value] = lookup[int(value)]
    return out


def transient_mask(label_map: np.ndarray, transient_classes) -> np.ndarray:
    """Binary (H, W) mask: 1 where the class is transient, else 0.

    Unlabeled pixels are never transient.
    """
    label_map = validate_label_map(label_map)
    wanted = np.zeros(256, dtype=np.uint8)
    for cid in transient_classes:
        if not 0 <= int(cid) < NUM_CLASSES:
            raise LabelError(f"transient class id {cid} out of range")
        wanted[int(cid)] = 1
    return wanted[label_map]
