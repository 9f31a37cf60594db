"""Shared fixtures: random reconstructions and random splat scenes."""

from __future__ import annotations

import numpy as np
import pytest

from rerender import (
    Camera,
    CameraModel,
    INVALID_POINT3D_ID,
    Point3D,
    PointCloudView,
    Reconstruction,
    RegisteredImage,
    Viewpoint,
)

ALL_MODELS = (CameraModel.SIMPLE_PINHOLE, CameraModel.PINHOLE, CameraModel.SIMPLE_RADIAL)


def random_unit_quat(rng: np.random.Generator) -> np.ndarray:
    q = rng.standard_normal(4)
    return q / np.linalg.norm(q)


def random_camera(rng: np.random.Generator, camera_id: int) -> Camera:
    model = ALL_MODELS[rng.integers(len(ALL_MODELS))]
    width = int(rng.integers(2, 1600))
    height = int(rng.integers(2, 1600))
    f = float(rng.uniform(10, 1500))
    cx = float(rng.uniform(0, width))
    cy = float(rng.uniform(0, height))
    if model is CameraModel.PINHOLE:
        params = [f, float(rng.uniform(10, 1500)), cx, cy]
    elif model is CameraModel.SIMPLE_PINHOLE:
        params = [f, cx, cy]
    else:
        params = [f, cx, cy, float(rng.uniform(-0.3, 0.3))]
    return Camera(camera_id, model, width, height, np.array(params))


def random_reconstruction(
    rng: np.random.Generator,
    n_cameras: int = 3,
    n_images: int = 5,
    n_points: int = 50,
    max_obs: int = 8,
) -> Reconstruction:
    cameras = {}
    for i in range(n_cameras):
        cid = int(rng.integers(1, 10_000)) + i * 10_000
        cameras[cid] = random_camera(rng, cid)
    camera_ids = list(cameras)

    points = {}
    for i in range(n_points):
        pid = int(rng.integers(1, 1_000_000)) + i * 1_000_000
        points[pid] = Point3D(
            pid,
            rng.standard_normal(3) * 10,
            rng.integers(0, 256, size=3).astype(np.uint8),
            float(abs(rng.standard_normal())),
            np.empty((0, 2), dtype=np.uint32),
        )
    point_ids = list(points)

    images = {}
    for i in range(n_images):
        iid = int(rng.integers(1, 100_000)) + i * 100_000
        n_obs = int(rng.integers(0, max_obs + 1))
        xys = rng.uniform(0, 1000, size=(n_obs, 2))
        pids = np.array(
            [
                INVALID_POINT3D_ID if rng.random() < 0.3 else point_ids[rng.integers(len(point_ids))]
                for _ in range(n_obs)
            ]
            if point_ids
            else [INVALID_POINT3D_ID] * n_obs,
            dtype=np.uint64,
        )
        images[iid] = RegisteredImage(
            iid,
            random_unit_quat(rng),
            rng.standard_normal(3),
            camera_ids[rng.integers(len(camera_ids))],
            f"img_{i:04d}_{int(rng.integers(0, 1_000_000))}.jpg",
            xys,
            pids,
        )
    image_ids = list(images)

    # attach tracks referencing real images
    for pt in points.values():
        n_track = int(rng.integers(0, 4))
        track = [
            (image_ids[rng.integers(len(image_ids))], int(rng.integers(0, max_obs + 1)))
            for _ in range(n_track)
        ]
        pt.track = np.array(track, dtype=np.uint32).reshape(-1, 2)

    return Reconstruction(cameras, images, points)


def random_scene(
    rng: np.random.Generator,
    max_points: int = 1000,
    max_dim: int = 64,
    duplicate_share: float = 0.15,
) -> tuple[PointCloudView, Viewpoint]:
    """Random viewpoint plus points spread across (and beyond) its frustum.

    A share of points duplicates another point's position under a different
    id, forcing exact depth ties that exercise the id tie-break.
    """
    width = int(rng.integers(4, max_dim + 1))
    height = int(rng.integers(4, max_dim + 1))
    f = float(rng.uniform(5, 60))
    cx = float(rng.uniform(width * 0.25, width * 0.75))
    cy = float(rng.uniform(height * 0.25, height * 0.75))
    model = ALL_MODELS[rng.integers(len(ALL_MODELS))]
    if model is CameraModel.PINHOLE:
        camera = Camera(1, model, width, height, np.array([f, f * rng.uniform(0.8, 1.2), cx, cy]))
    elif model is CameraModel.SIMPLE_PINHOLE:
        camera = Camera(1, model, width, height, np.array([f, cx, cy]))
    else:
        camera = Camera(1, model, width, height,
                        np.array([f, cx, cy, float(rng.uniform(-0.2, 0.2))]))
    qvec = random_unit_quat(rng)
    tvec = rng.standard_normal(3)
    viewpoint = Viewpoint(tuple(qvec), tuple(tvec), camera)

    n = int(rng.integers(0, max_points + 1))
    # sample in the camera frame so most points land near the viewport
    z = rng.uniform(-1.0, 10.0, size=n)
    u = rng.uniform(-0.3 * width, 1.3 * width, size=n)
    v = rng.uniform(-0.3 * height, 1.3 * height, size=n)
    xc = (u - cx) / f * np.abs(z)
    yc = (v - cy) / f * np.abs(z)
    p_cam = np.column_stack([xc, yc, z])
    from rerender import quat_to_matrix

    R = quat_to_matrix(qvec)
    xyz = (p_cam - tvec) @ R  # R^T (p_cam - t) row-wise

    if n >= 2:
        n_dup = int(n * duplicate_share)
        src = rng.integers(0, n, size=n_dup)
        dst = rng.integers(0, n, size=n_dup)
        xyz[dst] = xyz[src]

    rgb = rng.integers(0, 256, size=(n, 3)).astype(np.uint8)
    ids = rng.permutation(n).astype(np.uint64) * np.uint64(7) + np.uint64(3)
    return PointCloudView(xyz, rgb, ids), viewpoint


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)


def make_mini_scene(
    root,
    n_images: int = 6,
    photo_size=(500, 500),
    seed: int = 0,
    min_dim: int = 60,
    away_image: bool = False,
    missing_photo: bool = False,
    missing_label: bool = False,
    small_photo: bool = False,
):
    """Write a tiny synthetic reconstruction plus photos and label maps.

    A dense colored plane at z=5 fills the view of jittered 80x60 cameras,
    so renders survive the sparsity filter. Returns the three input dirs.
    """
    from PIL import Image

    from rerender import serialize_reconstruction

    rng = np.random.default_rng(seed)
    recon_dir = root / "recon"
    photos_dir = root / "photos"
    labels_dir = root / "labels"
    for d in (recon_dir, photos_dir, labels_dir):
        d.mkdir(parents=True, exist_ok=True)

    xs = np.linspace(-12, 12, 160)
    ys = np.linspace(-9, 9, 120)
    gx, gy = np.meshgrid(xs, ys)
    xyz = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, 5.0)])
    colors = np.column_stack([
        (127 + 120 * np.sin(gx.ravel())).astype(np.uint8),
        (127 + 120 * np.cos(gy.ravel())).astype(np.uint8),
        np.full(gx.size, 90, dtype=np.uint8),
    ])

    cameras = {1: Camera(1, CameraModel.SIMPLE_PINHOLE, 80, 60,
                         np.array([20.0, 40.0, 30.0]))}
    images = {}
    points = {
        i + 1: Point3D(i + 1, xyz[i], colors[i], 0.1, np.empty((0, 2), dtype=np.uint32))
        for i in range(xyz.shape[0])
    }

    for i in range(n_images):
        name = f"photo_{i:03d}.png"
        tvec = rng.uniform(-0.4, 0.4, size=3)
        qvec = (1.0, 0.0, 0.0, 0.0)
        if away_image and i == n_images - 1:
            qvec = (0.0, 1.0, 0.0, 0.0)  # looks at -z: nothing to splat
        images[i + 1] = RegisteredImage(
            i + 1, np.array(qvec), tvec, 1, name,
            np.empty((0, 2)), np.empty(0, dtype=np.uint64),
        )
        if missing_photo and i == 0:
            pass
        else:
            size = photo_size(i) if callable(photo_size) else photo_size
            if small_photo and i == 1:
                size = (449, 800)
            pixels = rng.integers(0, 256, size=(size[1], size[0], 3)).astype(np.uint8)
            Image.fromarray(pixels, mode="RGB").save(photos_dir / name)
        if missing_label and i == 2:
            continue
        label = np.full((60, 80), 2, dtype=np.uint8)  # sky
        label[40:, :] = 1  # building
        if i % 2 == 0:
            label[20:30, 30:40] = 12  # person block
        Image.fromarray(label, mode="L").save(labels_dir / f"photo_{i:03d}.png")

    recon = Reconstruction(cameras, images, points)
    serialize_reconstruction(recon, recon_dir, "binary")
    return recon_dir, photos_dir, labels_dir
