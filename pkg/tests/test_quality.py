"""Metric anchors and reference comparisons."""

import math

import numpy as np
import pytest

from rerender import FilterbankExtractor, compute_report, l1, perceptual, psnr
from rerender.quality import PSNR_CAP_DB, perceptual_from_pyramids

from oracles import double_loop_l1


def test_l1_identity():
    a = np.random.default_rng(0).random((3, 8, 8))
    assert l1(a, a) == 0.0


def test_l1_constant_offset():
    rng = np.random.default_rng(1)
    a = rng.random((3, 16, 16)) * (1.0 - 10.0 / 255.0)  # keep b clamp-free
    b = a + 10.0 / 255.0
    assert l1(a, b) == pytest.approx(10.0, abs=1e-6)


def test_l1_matches_double_loop():
    rng = np.random.default_rng(2)
    a = rng.random((3, 7, 9))
    b = rng.random((3, 7, 9))
    assert l1(a, b) == pytest.approx(double_loop_l1(a, b), abs=1e-9)


def test_l1_size_mismatch():
    with pytest.raises(ValueError, match="sizes disagree"):
        l1(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))


def test_psnr_identity_capped():
    a = np.random.default_rng(3).random((3, 8, 8))
    assert psnr(a, a) == PSNR_CAP_DB == 99.0


def test_psnr_maximum_difference():
    a = np.zeros((3, 4, 4))
    b = np.ones((3, 4, 4))
    assert psnr(a, b) == 0.0


def test_psnr_unit_difference():
    a = np.full((3, 4, 4), 0.25)
    b = a + 1.0 / 255.0
    assert psnr(a, b) == pytest.approx(20 * math.log10(255), abs=1e-3)
    assert psnr(a, b) == pytest.approx(48.1308, abs=1e-3)


def test_psnr_strictly_decreasing_in_mse():
    a = np.full((3, 8, 8), 0.5)
    values = [psnr(a, a + eps) for eps in (1e-3, 2e-3, 4e-3, 8e-3)]
    assert values == sorted(values, reverse=True)
    assert len(set(values)) == len(values)


def test_perceptual_identity_and_monotonicity():
    rng = np.random.default_rng(4)
    extractor = FilterbankExtractor(seed=0)
    a = rng.random((3, 32, 32)) * 0.5
    assert perceptual(a, a, extractor) == 0.0
    noise = rng.standard_normal(a.shape)
    values = [perceptual(a, a + eps * noise, extractor) for eps in (0.01, 0.02, 0.04)]
    assert values[0] < values[1] < values[2]


def test_perceptual_matches_per_layer_mse_sum():
    rng = np.random.default_rng(5)
    extractor = FilterbankExtractor(seed=1)
    a = rng.random((3, 16, 16))
    b = rng.random((3, 16, 16))
    pyr_a, pyr_b = extractor(a), extractor(b)
    expected = sum(float(np.mean((fa - fb) ** 2)) for fa, fb in zip(pyr_a, pyr_b))
    assert perceptual(a, b, extractor) == pytest.approx(expected, rel=1e-12)


def test_perceptual_symmetry():
    rng = np.random.default_rng(6)
    extractor = FilterbankExtractor(seed=2)
    a = rng.random((3, 16, 16))
    b = rng.random((3, 16, 16))
    assert perceptual(a, b, extractor) == perceptual(b, a, extractor)


def test_perceptual_pyramid_mismatch():
    with pytest.raises(ValueError, match="layer count"):
        perceptual_from_pyramids([np.zeros((2, 4, 4))], [])
    with pytest.raises(ValueError, match="shapes disagree"):
        perceptual_from_pyramids([np.zeros((2, 4, 4))], [np.zeros((2, 4, 5))])


def test_compute_report_means():
    rng = np.random.default_rng(7)
    extractor = FilterbankExtractor(seed=0)
    pairs = []
    for i in range(3):
        truth = rng.random((3, 16, 16))
        pred = np.clip(truth + rng.standard_normal(truth.shape) * 0.05, 0, 1)
        pairs.append((f"img{i}.png", pred, truth))
    report = compute_report(pairs, extractor)
    assert report.extractor_tag == "filterbank-seed0"
    assert len(report.per_image) == 3
    assert report.mean_l1 == pytest.approx(np.mean([m.l1 for m in report.per_image]))
    assert all(m.psnr < 99.0 for m in report.per_image)
    with pytest.raises(ValueError):
        compute_report([], extractor)
