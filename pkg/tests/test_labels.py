"""Palette encoding, decode round trips, and transient masks."""

import numpy as np
import pytest
from PIL import Image

from rerender import (
    DEFAULT_TRANSIENT_CLASSES,
    LabelError,
    Palette,
    decode_labels,
    encode_labels,
    load_label_map,
    load_palette,
    transient_mask,
)
from rerender.labels import NUM_CLASSES, UNLABELED

from oracles import membership_mask


@pytest.fixture(scope="module")
def palette() -> Palette:
    return load_palette()


def test_packaged_palette_is_injective(palette):
    assert len(palette.names) == NUM_CLASSES
    colors = {tuple(c) for c in palette.colors.tolist()}
    assert len(colors) == NUM_CLASSES
    assert (0, 0, 0) not in colors
    for name in DEFAULT_TRANSIENT_CLASSES:
        assert palette.class_id(name) in range(NUM_CLASSES)


def test_all_zeros_map_encodes_to_first_color(palette):
    encoded = encode_labels(np.zeros((4, 6), dtype=np.uint8), palette)
    expected = palette.colors[0].astype(np.float32) / np.float32(255)
    assert encoded.shape == (3, 4, 6)
    assert np.all(encoded == expected[:, None, None])


def test_unlabeled_encodes_black(palette):
    label_map = np.full((3, 3), UNLABELED, dtype=np.uint8)
    assert np.all(encode_labels(label_map, palette) == 0)


def test_class_out_of_range_rejected(palette):
    label_map = np.full((2, 2), 150, dtype=np.uint8)
    with pytest.raises(LabelError, match="class out of range"):
        encode_labels(label_map, palette)
    with pytest.raises(LabelError, match="class out of range"):
        encode_labels(np.full((2, 2), 254, dtype=np.uint8), palette)


def test_encode_decode_round_trip(palette):
    rng = np.random.default_rng(5)
    label_map = rng.integers(0, NUM_CLASSES, size=(32, 17)).astype(np.uint8)
    label_map[rng.random(label_map.shape) < 0.2] = UNLABELED
    assert np.array_equal(decode_labels(encode_labels(label_map, palette), palette), label_map)


def test_decode_rejects_unknown_color(palette):
    encoded = np.full((3, 2, 2), 1.0 / 255.0)
    with pytest.raises(LabelError, match="not in palette"):
        decode_labels(encoded, palette)


def test_transient_mask_basics(palette):
    rng = np.random.default_rng(6)
    label_map = rng.integers(0, NUM_CLASSES, size=(20, 20)).astype(np.uint8)
    assert np.all(transient_mask(label_map, frozenset()) == 0)

    person = palette.class_id("person")
    all_person = np.full((8, 8), person, dtype=np.uint8)
    assert np.all(transient_mask(all_person, {person}) == 1)

    unlabeled = np.full((8, 8), UNLABELED, dtype=np.uint8)
    assert np.all(transient_mask(unlabeled, {person}) == 0)


def test_transient_mask_matches_membership_loop(palette):
    rng = np.random.default_rng(7)
    label_map = rng.integers(0, NUM_CLASSES, size=(25, 31)).astype(np.uint8)
    label_map[rng.random(label_map.shape) < 0.1] = UNLABELED
    ids = palette.class_ids(DEFAULT_TRANSIENT_CLASSES)
    assert np.array_equal(transient_mask(label_map, ids), membership_mask(label_map, ids))


def test_transient_mask_union_property(palette):
    rng = np.random.default_rng(8)
    label_map = rng.integers(0, NUM_CLASSES, size=(16, 16)).astype(np.uint8)
    for _ in range(10):
        a = set(rng.integers(0, NUM_CLASSES, size=5).tolist())
        b = set(rng.integers(0, NUM_CLASSES, size=5).tolist())
        union = transient_mask(label_map, a | b)
        assert np.array_equal(union, transient_mask(label_map, a) | transient_mask(label_map, b))


def test_label_map_png_round_trip(tmp_path, palette):
    rng = np.random.default_rng(9)
    label_map = rng.integers(0, NUM_CLASSES, size=(12, 18)).astype(np.uint8)
    path = tmp_path / "labels.png"
    Image.fromarray(label_map, mode="L").save(path)
    assert np.array_equal(load_label_map(path), label_map)


def test_label_map_rejects_rgb_png(tmp_path):
    path = tmp_path / "rgb.png"
    Image.new("RGB", (4, 4)).save(path)
    with pytest.raises(LabelError, match="single-channel"):
        load_label_map(path)


def test_label_map_rejects_out_of_range_values(tmp_path):
    path = tmp_path / "bad.png"
    Image.fromarray(np.full((4, 4), 200, dtype=np.uint8), mode="L").save(path)
    with pytest.raises(LabelError, match="class out of range"):
        load_label_map(path)


def test_palette_validation():
    colors = np.arange(NUM_CLASSES * 3, dtype=np.uint8).reshape(NUM_CLASSES, 3)
    colors[1] = colors[0]
    with pytest.raises(LabelError, match="distinct"):
        Palette(tuple(f"c{i}" for i in range(NUM_CLASSES)), colors)

    colors = np.arange(NUM_CLASSES * 3, dtype=np.uint8).reshape(NUM_CLASSES, 3)
    colors[0] = (0, 0, 0)
    with pytest.raises(LabelError, match="black"):
        Palette(tuple(f"c{i}" for i in range(NUM_CLASSES)), colors)

    with pytest.raises(LabelError, match="unknown class name"):
        load_palette().class_id("not-a-class")
