"""Image reconstruction quality metrics: L1, PSNR, and perceptual distance.

L1 and PSNR are reported on the 0-255 scale regardless of input range;
inputs are (3, H, W) floats in [0, 1]. The perceptual metric is
parameterized by a feature extractor and reports its tag alongside the
values, since absolute numbers are only comparable for the same extractor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .style import filterbank_features

PSNR_CAP_DB = 99.0


def load_image(path: str | Path) -> np.ndarray:
    """Load an RGB image as (3, H, W) float64 in [0, 1]."""
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return rgb.transpose(2, 0, 1)


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image sizes disagree: {a.shape} vs {b.shape}")
    return a, b


def l1(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute difference over pixels and channels, 0-255 scale."""
    a, b = _check_pair(a, b)
    return float(np.mean(np.abs(a - b))) * 255.0


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10 log10(255^2 / MSE) in dB, capped at 99 for identical images."""
    a, b = _check_pair(a, b)
    mse = float(np.mean(((a - b) * 255.0) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(255.0 ** 2 / mse), PSNR_CAP_DB)


@dataclass(frozen=True)
class FilterbankExtractor:
    """Seeded random-filterbank feature extractor with a report tag."""

    seed: int = 0
    nonnegative: bool = False

    @property
    def tag(self) -> str:
        return f"filterbank-seed{self.seed}"

    def __call__(self, image: np.ndarray):
        return filterbank_features(image, seed=self.seed, nonnegative=self.nonnegative)


def perceptual_from_pyramids(pyramid_a, pyramid_b) -> float:
    """Sum over layers of mean squared feature differences."""
    if len(pyramid_a) != len(pyramid_b):
        raise ValueError("feature pyramids disagree in layer count")
    total = 0.0
    for fa, fb in zip(pyramid_a, pyramid_b):
        fa = np.asarray(fa, dtype=np.float64)
        fb = np.asarray(fb, dtype=np.float64)
        if fa.shape != fb.shape:
            raise ValueError(f"feature shapes disagree: {fa.shape} vs {fb.shape}")
        total += float(np.mean((fa - fb) ** 2))
    return total


def perceptual(a: np.ndarray, b: np.ndarray, extractor) -> float:
    """Feature-space reconstruction distance under the given extractor."""
    a, b = _check_pair(a, b)
    return perceptual_from_pyramids(extractor(a), extractor(b))


@dataclass
class ImageMetrics:
    name: str
    l1: float
    psnr: float
    perceptual: float


@dataclass
class MetricReport:
    extractor_tag: str
    per_image: list[ImageMetrics]
    mean_l1: float
    mean_psnr: float
    mean_perceptual: float

    def to_dict(self) -> dict:
        return {
            "extractor": self.extractor_tag,
            "mean": {
                "l1": self.mean_l1,
                "psnr": self.mean_psnr,
                "perceptual": self.mean_perceptual,
            },
            "per_image": [
                {"name": m.name, "l1": m.l1, "psnr": m.psnr, "perceptual": m.perceptual}
                for m in self.per_image
            ],
        }


def compute_report(pairs, extractor) -> MetricReport:
    """Per-image and mean metrics for (name, predicted, truth) image pairs."""
    per_image = []
    for name, pred, truth in pairs:
        per_image.append(
            ImageMetrics(
                name=name,
                l1=l1(pred, truth),
                psnr=psnr(pred, truth),
                perceptual=perceptual(pred, truth, extractor),
            )
        )
    if not per_image:
        raise ValueError("no image pairs to evaluate")
    return MetricReport(
        extractor_tag=extractor.tag,
        per_image=per_image,
        mean_l1=float(np.mean([m.l1 for m in per_image])),
        mean_psnr=float(np.mean([m.psnr for m in per_image])),
        mean_perceptual=float(np.mean([m.perceptual for m in per_image])),
    )
