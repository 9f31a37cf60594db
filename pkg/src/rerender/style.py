"""Gram-matrix style statistics, triplet mining, and the filterbank extractor.

Style similarity between two images is the sum over feature layers of the
squared Frobenius distance between their Gram matrices. Triplets for
embedding pretraining pair each anchor with a positive drawn from its k
style-nearest images and a negative from its k style-furthest.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FeaturePyramid = list  # list of (C, H, W) float arrays, coarse layers later

_NRFT_MAGIC = b"NRFT"
_NRFT_VERSION = 1

FILTERBANK_LEVELS = 4
FILTERBANK_BASE_KERNELS = 16


def gram(features: np.ndarray) -> np.ndarray:
    """Channel covariance of one (C, H, W) feature map: F F^T / (C H W)."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3:
        raise ValueError("expected a (C, H, W) feature map")
    c, h, w = features.shape
    flat = features.reshape(c, h * w)
    return (flat @ flat.T) / (c * h * w)


def gram_set(pyramid) -> list[np.ndarray]:
    """Gram matrix per pyramid layer."""
    return [gram(layer) for layer in pyramid]


def validate_gram_set(grams, symmetry_tol: float = 1e-6, eig_floor: float = -1e-6) -> None:
    for j, g in enumerate(grams):
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError(f"layer {j}: Gram matrix must be square")
        if not np.all(np.abs(g - g.T) <= symmetry_tol):
            raise ValueError(f"layer {j}: Gram matrix not symmetric within {symmetry_tol}")
        if np.linalg.eigvalsh(g).min() < eig_floor:
            raise ValueError(f"layer {j}: Gram matrix not positive semidefinite")


def _check_layer_shapes(a, b) -> None:
    if len(a) != len(b) or any(ga.shape != gb.shape for ga, gb in zip(a, b)):
        raise ValueError("gram sets disagree in layer shapes")


def style_distance(a, b) -> float:
    """Sum over layers of squared Frobenius norms of Gram differences."""
    _check_layer_shapes(a, b)
    total = 0.0
    for ga, gb in zip(a, b):
        diff = np.asarray(ga, dtype=np.float64) - np.asarray(gb, dtype=np.float64)
        total += float(np.sum(diff * diff))
    return total


def triplet_loss(g_anchor, g_positive, g_negative, alpha: float) -> float:
    """Per-layer hinge on Gram distances, summed over layers.

    Each layer contributes max(|g_a - g_p|_F^2 - |g_a - g_n|_F^2 + alpha, 0).
    """
    _check_layer_shapes(g_anchor, g_positive)
    _check_layer_shapes(g_anchor, g_negative)
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    total = 0.0
    for ga, gp, gn in zip(g_anchor, g_positive, g_negative):
        dp = np.asarray(ga, dtype=np.float64) - np.asarray(gp, dtype=np.float64)
        dn = np.asarray(ga, dtype=np.float64) - np.asarray(gn, dtype=np.float64)
        total += max(float(np.sum(dp * dp)) - float(np.sum(dn * dn)) + alpha, 0.0)
    return total


@dataclass(frozen=True)
class TripletConfig:
    k: int = 10
    alpha: float = 0.3
    seed: int = 0
    n_per_anchor: int = 4

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.n_per_anchor < 1:
            raise ValueError("n_per_anchor must be >= 1")


@dataclass
class TripletSet:
    triplets: list[tuple[int, int, int]]  # (anchor, positive, negative) manifest ids
    config: TripletConfig
    image_ids: list[int] = field(default_factory=list)


def distance_matrix(grams_per_image, threads: int = 1) -> np.ndarray:
    """Symmetric pairwise style-distance matrix.

    Each pair is summed in fixed layer order, so the result is deterministic
    for any thread count.
    """
    n = len(grams_per_image)
    out = np.zeros((n, n))

    def fill_row(i: int) -> None:
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = style_distance(grams_per_image[i], grams_per_image[j])

    if threads <= 1:
        for i in range(n):
            fill_row(i)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill_row, range(n)))
    return out


def neighbor_pools(distances: np.ndarray, k: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per-anchor pools: indices of the k closest and k furthest others.

    Ordering is by (distance, index) so ties resolve deterministically.
    """
    n = distances.shape[0]
    if n < k + 1:
        raise ValueError(f"need at least k+1={k + 1} images; got {n} (lower k)")
    closest, furthest = [], []
    for i in range(n):
        others = np.array([j for j in range(n) if j != i])
        order = others[np.argsort(distances[i, others], kind="stable")]
        closest.append(order[:k])
        furthest.append(order[-k:])
    return closest, furthest


def mine_triplets(
    grams_per_image,
    cfg: TripletConfig,
    image_ids=None,
    threads: int = 1,
) -> TripletSet:
    """Mine (anchor, positive, negative) triplets from per-image Gram sets.

    Positives are sampled (seeded, with replacement) from each anchor's k
    style-closest images, negatives from its k furthest.
    """
    n = len(grams_per_image)
    ids = list(range(n)) if image_ids is None else [int(v) for v in image_ids]
    if len(ids) != n:
        raise ValueError("image_ids length must match grams_per_image")
    distances = distance_matrix(grams_per_image, threads=threads)
    closest, furthest = neighbor_pools(distances, cfg.k)
    rng = np.random.default_rng(cfg.seed)
    triplets = []
    for a in range(n):
        pos = rng.choice(closest[a], size=cfg.n_per_anchor, replace=True)
        neg = rng.choice(furthest[a], size=cfg.n_per_anchor, replace=True)
        for p, q in zip(pos, neg):
            triplets.append((ids[a], ids[int(p)], ids[int(q)]))
    return TripletSet(triplets, cfg, ids)


def _avg_pool2(features: np.ndarray) -> np.ndarray:
    c, h, w = features.shape
    h2, w2 = h // 2, w // 2
    if h2 < 1 or w2 < 1:
        raise ValueError("feature map too small to pool")
    trimmed = features[:, : 2 * h2, : 2 * w2]
    return trimmed.reshape(c, h2, 2, w2, 2).mean(axis=(2, 4))


def _conv_same(features: np.ndarray, bank: np.ndarray) -> np.ndarray:
    """Zero-padded 3x3 correlation: (C,H,W) x (K,C,3,3) -> (K,H,W)."""
    padded = np.pad(features, ((0, 0), (1, 1), (1, 1)))
    windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(1, 2))
    return np.einsum("chwij,kcij->khw", windows, bank, optimize=True)


def filterbank_kernels(seed: int, nonnegative: bool = False) -> list[np.ndarray]:
    """Fixed seeded banks of unit-normalized 3x3 kernels, one per level."""
    rng = np.random.default_rng(seed)
    banks = []
    in_channels = 3
    for level in range(FILTERBANK_LEVELS):
        out_channels = FILTERBANK_BASE_KERNELS * 2 ** level
        bank = rng.standard_normal((out_channels, in_channels, 3, 3))
        if nonnegative:
            bank = np.abs(bank)
        norms = np.sqrt(np.sum(bank * bank, axis=(1, 2, 3), keepdims=True))
        banks.append(bank / norms)
        in_channels = out_channels
    return banks


def filterbank_features(image: np.ndarray, seed: int = 0, nonnegative: bool = False):
    """Deterministic stand-in feature extractor for style statistics.

    Four levels: each convolves a seeded random bank over the 2x
    average-pooled previous level and rectifies at zero. Channel counts are
    16, 32, 64, 128. Real network features can be supplied through NRFT
    files instead.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3 or image.shape[1] < 1 or image.shape[2] < 1:
        raise ValueError("expected a nonempty (3, H, W) image")
    banks = filterbank_kernels(seed, nonnegative=nonnegative)
    pyramid = []
    features = image
    for level, bank in enumerate(banks):
        if level > 0:
            features = _avg_pool2(pyramid[-1])
        features = np.maximum(_conv_same(features, bank), 0.0)
        pyramid.append(features)
    return pyramid


def write_nrft(pyramid, path: str | Path) -> None:
    """Write a feature pyramid as an NRFT container (f32 planes)."""
    parts = [_NRFT_MAGIC, struct.pack("<II", _NRFT_VERSION, len(pyramid))]
    for layer in pyramid:
        layer = np.asarray(layer, dtype="<f4")
        if layer.ndim != 3:
            raise ValueError("NRFT layers must be (C, H, W)")
        parts.append(struct.pack("<III", *layer.shape))
        parts.append(np.ascontiguousarray(layer).tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_nrft(path: str | Path):
    data = Path(path).read_bytes()
    if data[:4] != _NRFT_MAGIC:
        raise ValueError(f"{path}: not an NRFT container")
    version, num_layers = struct.unpack_from("<II", data, 4)
    if version != _NRFT_VERSION:
        raise ValueError(f"{path}: unsupported NRFT version {version}")
    pos = 12
    pyramid = []
    for _ in range(num_layers):
        c, h, w = struct.unpack_from("<III", data, pos)
        pos += 12
        count = c * h * w
        if len(data) - pos < 4 * count:
            raise ValueError(f"{path}: truncated NRFT payload")
        layer = np.frombuffer(data, dtype="<f4", count=count, offset=pos)
        pyramid.append(layer.reshape(c, h, w).astype(np.float64))
        pos += 4 * count
    return pyramid
