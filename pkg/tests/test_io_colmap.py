"""Reconstruction interchange parsing and serialization."""

import struct

import numpy as np
import pytest

from rerender import (
    Camera,
    CameraModel,
    DanglingReferenceError,
    DuplicateIdError,
    INVALID_POINT3D_ID,
    Point3D,
    Reconstruction,
    RegisteredImage,
    TruncatedStreamError,
    UnknownCameraModelError,
    parse_reconstruction,
    serialize_reconstruction,
)

from conftest import random_reconstruction


def write_fixture_binary(directory):
    """Hand-packed fixture bytes, written independently of the serializer.

    One PINHOLE camera (fx=fy=500, cx=320, cy=240, 640x480), one image at
    identity pose with two observations, one point at (0, 0, 5).
    """
    cameras = (
        struct.pack("<Q", 1)
        + struct.pack("<IiQQ", 2, 1, 640, 480)
        + struct.pack("<4d", 500.0, 500.0, 320.0, 240.0)
    )
    images = (
        struct.pack("<Q", 1)
        + struct.pack("<I", 4)
        + struct.pack("<4d", 1.0, 0.0, 0.0, 0.0)
        + struct.pack("<3d", 0.0, 0.0, 0.0)
        + struct.pack("<I", 2)
        + b"view0.png\x00"
        + struct.pack("<Q", 2)
        + struct.pack("<ddQ", 320.5, 240.25, 9)
        + struct.pack("<ddQ", 10.0, 20.0, INVALID_POINT3D_ID)
    )
    points = (
        struct.pack("<Q", 1)
        + struct.pack("<Q", 9)
        + struct.pack("<3d", 0.0, 0.0, 5.0)
        + bytes([10, 20, 30])
        + struct.pack("<d", 0.5)
        + struct.pack("<Q", 1)
        + struct.pack("<II", 4, 0)
    )
    (directory / "cameras.bin").write_bytes(cameras)
    (directory / "images.bin").write_bytes(images)
    (directory / "points3D.bin").write_bytes(points)
    return cameras, images, points


def test_empty_reconstruction_round_trip(tmp_path):
    for name in ("cameras.bin", "images.bin", "points3D.bin"):
        (tmp_path / name).write_bytes(struct.pack("<Q", 0))
    recon = parse_reconstruction(tmp_path, "binary")
    assert recon == Reconstruction()

    out = tmp_path / "out"
    serialize_reconstruction(recon, out, "binary")
    assert parse_reconstruction(out, "binary") == Reconstruction()
    serialize_reconstruction(recon, out, "text")
    assert parse_reconstruction(out, "text") == Reconstruction()


def test_fixture_fields_bit_equal(tmp_path):
    write_fixture_binary(tmp_path)
    recon = parse_reconstruction(tmp_path, "binary")

    assert list(recon.cameras) == [2]
    cam = recon.cameras[2]
    assert cam.model is CameraModel.PINHOLE
    assert (cam.width, cam.height) == (640, 480)
    assert cam.params.tolist() == [500.0, 500.0, 320.0, 240.0]

    img = recon.images[4]
    assert img.qvec.tolist() == [1.0, 0.0, 0.0, 0.0]
    assert img.tvec.tolist() == [0.0, 0.0, 0.0]
    assert img.camera_id == 2
    assert img.name == "view0.png"
    assert img.xys.tolist() == [[320.5, 240.25], [10.0, 20.0]]
    assert img.point3d_ids.tolist() == [9, INVALID_POINT3D_ID]

    pt = recon.points[9]
    assert pt.xyz.tolist() == [0.0, 0.0, 5.0]
    assert pt.rgb.tolist() == [10, 20, 30]
    assert pt.error == 0.5
    assert pt.track.tolist() == [[4, 0]]


def test_fixture_serializes_byte_identical(tmp_path):
    cameras, images, points = write_fixture_binary(tmp_path)
    recon = parse_reconstruction(tmp_path, "binary")
    out = tmp_path / "out"
    serialize_reconstruction(recon, out, "binary")
    assert (out / "cameras.bin").read_bytes() == cameras
    assert (out / "images.bin").read_bytes() == images
    assert (out / "points3D.bin").read_bytes() == points


def test_text_fixture_parses(tmp_path):
    (tmp_path / "cameras.txt").write_text(
        "# camera list\n1\n2 PINHOLE 640 480 500.0 500.0 320.0 240.0\n"
    )
    (tmp_path / "images.txt").write_text(
        "1\n4 1.0 0.0 0.0 0.0 0.0 0.0 0.0 2 view0.png 2 320.5 240.25 9 10.0 20.0 -1\n"
    )
    (tmp_path / "points3D.txt").write_text("1\n9 0.0 0.0 5.0 10 20 30 0.5 1 4 0\n")
    recon = parse_reconstruction(tmp_path, "text")
    assert recon.cameras[2].params.tolist() == [500.0, 500.0, 320.0, 240.0]
    assert recon.images[4].point3d_ids.tolist() == [9, INVALID_POINT3D_ID]
    assert recon.points[9].track.tolist() == [[4, 0]]


def test_truncated_cameras_file(tmp_path):
    write_fixture_binary(tmp_path)
    data = (tmp_path / "cameras.bin").read_bytes()
    (tmp_path / "cameras.bin").write_bytes(data[:-10])
    with pytest.raises(TruncatedStreamError, match="truncated stream at camera 0"):
        parse_reconstruction(tmp_path, "binary")


def test_truncated_declared_count(tmp_path):
    write_fixture_binary(tmp_path)
    data = (tmp_path / "images.bin").read_bytes()
    (tmp_path / "images.bin").write_bytes(struct.pack("<Q", 2) + data[8:])
    with pytest.raises(TruncatedStreamError, match="truncated stream at image 1"):
        parse_reconstruction(tmp_path, "binary")


def test_unknown_camera_model(tmp_path):
    write_fixture_binary(tmp_path)
    bad = (
        struct.pack("<Q", 1)
        + struct.pack("<IiQQ", 2, 7, 640, 480)
        + struct.pack("<4d", 500.0, 500.0, 320.0, 240.0)
    )
    (tmp_path / "cameras.bin").write_bytes(bad)
    with pytest.raises(UnknownCameraModelError, match="unknown camera model id 7"):
        parse_reconstruction(tmp_path, "binary")


def test_duplicate_camera_id(tmp_path):
    write_fixture_binary(tmp_path)
    record = struct.pack("<IiQQ", 2, 1, 640, 480) + struct.pack("<4d", 500.0, 500.0, 320.0, 240.0)
    (tmp_path / "cameras.bin").write_bytes(struct.pack("<Q", 2) + record + record)
    with pytest.raises(DuplicateIdError, match="duplicate camera id 2"):
        parse_reconstruction(tmp_path, "binary")


def test_dangling_camera_reference(tmp_path):
    write_fixture_binary(tmp_path)
    (tmp_path / "cameras.bin").write_bytes(struct.pack("<Q", 0))
    with pytest.raises(DanglingReferenceError, match="missing camera 2"):
        parse_reconstruction(tmp_path, "binary")


def test_trailing_bytes_ignored(tmp_path):
    write_fixture_binary(tmp_path)
    with (tmp_path / "points3D.bin").open("ab") as f:
        f.write(b"\xde\xad\xbe\xef")
    recon = parse_reconstruction(tmp_path, "binary")
    assert len(recon.points) == 1


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_round_trip_binary_random(tmp_path, seed):
    rng = np.random.default_rng(seed)
    recon = random_reconstruction(rng)
    first = tmp_path / "a"
    serialize_reconstruction(recon, first, "binary")
    parsed = parse_reconstruction(first, "binary")
    assert parsed == recon

    second = tmp_path / "b"
    serialize_reconstruction(parsed, second, "binary")
    for name in ("cameras.bin", "images.bin", "points3D.bin"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_round_trip_text_random(tmp_path, seed):
    rng = np.random.default_rng(100 + seed)
    recon = random_reconstruction(rng)
    serialize_reconstruction(recon, tmp_path, "text")
    assert parse_reconstruction(tmp_path, "text") == recon


def test_round_trip_large(tmp_path):
    rng = np.random.default_rng(7)
    recon = random_reconstruction(rng, n_cameras=100, n_images=100, n_points=10_000)
    serialize_reconstruction(recon, tmp_path, "binary")
    assert parse_reconstruction(tmp_path, "binary") == recon


def test_camera_invariants():
    with pytest.raises(Exception, match="expects 4 params"):
        Camera(1, CameraModel.PINHOLE, 64, 64, np.array([500.0, 320.0, 240.0]))
    with pytest.raises(Exception, match="non-positive focal"):
        Camera(1, CameraModel.SIMPLE_PINHOLE, 64, 64, np.array([0.0, 320.0, 240.0]))
    with pytest.raises(Exception, match="non-positive size"):
        Camera(1, CameraModel.SIMPLE_PINHOLE, 0, 64, np.array([5.0, 1.0, 1.0]))


def test_image_invariants():
    bad_q = np.array([1.0, 0.5, 0.0, 0.0])
    with pytest.raises(Exception, match="quaternion norm"):
        RegisteredImage(1, bad_q, np.zeros(3), 1, "a.jpg", np.empty((0, 2)),
                        np.empty(0, dtype=np.uint64))
    with pytest.raises(Exception, match="empty name"):
        RegisteredImage(1, np.array([1.0, 0, 0, 0]), np.zeros(3), 1, "",
                        np.empty((0, 2)), np.empty(0, dtype=np.uint64))


def test_point_rgb_range():
    with pytest.raises(Exception, match="rgb outside"):
        Point3D(1, np.zeros(3), np.array([300, 0, 0]), 0.0, np.empty((0, 2), dtype=np.uint32))


def test_text_name_with_space_rejected(tmp_path):
    img = RegisteredImage(1, np.array([1.0, 0, 0, 0]), np.zeros(3), 1, "a b.jpg",
                          np.empty((0, 2)), np.empty(0, dtype=np.uint64))
    cam = Camera(1, CameraModel.SIMPLE_PINHOLE, 8, 8, np.array([4.0, 4.0, 4.0]))
    recon = Reconstruction({1: cam}, {1: img}, {})
    with pytest.raises(Exception, match="whitespace"):
        serialize_reconstruction(recon, tmp_path, "text")
    serialize_reconstruction(recon, tmp_path, "binary")  # binary supports any name
    assert parse_reconstruction(tmp_path, "binary").images[1].name == "a b.jpg"
