"""Procedural toy scene with two appearance modes.

Writes everything the data toolkit needs to build an aligned dataset: a
sparse reconstruction (binary interchange files), photos rendered
analytically from a textured plane under per-image appearance modes, and
class-index label maps. A modes.json sidecar records each image's mode so
experiments can evaluate appearance separation.

The scene is a textured plane at z = 5 viewed by jittered near-frontal
cameras. "bright" photos keep the texture's luminance under a light sky;
"dark" photos scale it down heavily under a night sky. A share of photos
carries a transient blob labeled as person.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

PLANE_Z = 5.0
PLANE_X = 8.0
PLANE_Y = 7.0

CLASS_BUILDING = 1
CLASS_SKY = 2
CLASS_PERSON = 12

MODES = {
    "bright": {
        "gain": (0.9, 1.1),
        "tint": np.array([0.03, 0.02, 0.0]),
        "sky": np.array([0.60, 0.72, 0.92]),
    },
    "dark": {
        "gain": (0.20, 0.32),
        "tint": np.array([0.0, 0.01, 0.05]),
        "sky": np.array([0.04, 0.05, 0.12]),
    },
}


def texture(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Smooth RGB albedo over plane coordinates, in [0.05, 0.95]."""
    r = 0.5 + 0.45 * np.sin(0.9 * x + 1.7)
    g = 0.5 + 0.45 * np.sin(1.3 * y - 0.6)
    b = 0.5 + 0.45 * np.sin(0.7 * x + 1.1 * y)
    return np.stack([r, g, b], axis=-1)


def small_rotation_quat(rng: np.random.Generator) -> np.ndarray:
    angles = rng.uniform([-0.04, -0.04, -0.1], [0.04, 0.04, 0.1])
    q = np.array([1.0, angles[0] / 2, angles[1] / 2, angles[2] / 2])
    return q / np.linalg.norm(q)


def quat_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _render_photo(size: int, focal: float, qvec: np.ndarray, tvec: np.ndarray,
                  mode: dict, gain: float) -> tuple[np.ndarray, np.ndarray]:
    """Ray-cast the plane analytically; returns (photo [0,1], hit mask)."""
    R = quat_matrix(qvec)
    center = -R.T @ tvec
    us, vs = np.meshgrid(np.arange(size) + 0.5, np.arange(size) + 0.5)
    d_cam = np.stack([(us - size / 2) / focal, (vs - size / 2) / focal,
                      np.ones_like(us)], axis=-1)
    d_world = d_cam @ R  # R^T d per pixel
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (PLANE_Z - center[2]) / d_world[..., 2]
    hit_x = center[0] + s * d_world[..., 0]
    hit_y = center[1] + s * d_world[..., 1]
    hit = (s > 0) & (np.abs(hit_x) <= PLANE_X) & (np.abs(hit_y) <= PLANE_Y)

    photo = np.empty((size, size, 3))
    photo[:] = mode["sky"]
    plane_rgb = np.clip(texture(hit_x, hit_y) * gain + mode["tint"], 0.0, 1.0)
    photo[hit] = plane_rgb[hit]
    return photo, hit


def _paste_person(photo: np.ndarray, labels: np.ndarray, rng: np.random.Generator) -> None:
    size = photo.shape[0]
    cy = rng.uniform(0.3 * size, 0.7 * size)
    cx = rng.uniform(0.2 * size, 0.8 * size)
    ry = rng.uniform(0.10 * size, 0.18 * size)
    rx = ry * rng.uniform(0.35, 0.55)
    ys, xs = np.ogrid[:size, :size]
    blob = ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0
    photo[blob] = np.array([0.16, 0.15, 0.17]) * rng.uniform(0.8, 1.2)
    labels[blob] = CLASS_PERSON


def _write_reconstruction(recon_dir: Path, size: int, focal: float,
                          poses: list[tuple[np.ndarray, np.ndarray, str]],
                          points: np.ndarray, colors: np.ndarray) -> None:
    """Emit cameras/images/points3D in the binary interchange layout."""
    recon_dir.mkdir(parents=True, exist_ok=True)
    cameras = struct.pack("<Q", 1)
    cameras += struct.pack("<IiQQ", 1, 0, size, size)  # SIMPLE_PINHOLE
    cameras += struct.pack("<3d", focal, size / 2, size / 2)
    (recon_dir / "cameras.bin").write_bytes(cameras)

    parts = [struct.pack("<Q", len(poses))]
    for image_id, (qvec, tvec, name) in enumerate(poses, start=1):
        parts.append(struct.pack("<I", image_id))
        parts.append(struct.pack("<4d", *qvec))
        parts.append(struct.pack("<3d", *tvec))
        parts.append(struct.pack("<I", 1))
        parts.append(name.encode() + b"\x00")
        parts.append(struct.pack("<Q", 0))
    (recon_dir / "images.bin").write_bytes(b"".join(parts))

    parts = [struct.pack("<Q", points.shape[0])]
    for pid in range(points.shape[0]):
        parts.append(struct.pack("<Q", pid + 1))
        parts.append(struct.pack("<3d", *points[pid]))
        parts.append(colors[pid].astype(np.uint8).tobytes())
        parts.append(struct.pack("<dQ", 0.1, 0))
    (recon_dir / "points3D.bin").write_bytes(b"".join(parts))


def write_toy_scene(
    root: str | Path,
    n_images: int = 200,
    size: int = 64,
    seed: int = 0,
    transient_share: float = 0.35,
    grid: tuple[int, int] = (240, 210),
) -> dict:
    """Write recon/, photos/, labels/, and modes.json under root."""
    root = Path(root)
    photos_dir = root / "photos"
    labels_dir = root / "labels"
    photos_dir.mkdir(parents=True, exist_ok=True)
    labels_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    focal = size * 26.0 / 64.0

    xs = np.linspace(-PLANE_X, PLANE_X, grid[0])
    ys = np.linspace(-PLANE_Y, PLANE_Y, grid[1])
    gx, gy = np.meshgrid(xs, ys)
    points = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, PLANE_Z)])
    colors = np.clip(texture(gx.ravel(), gy.ravel()) * 255.0, 0, 255)

    poses = []
    modes_record = {}
    for i in range(n_images):
        name = f"toy_{i:04d}.png"
        mode_name = "bright" if rng.random() < 0.5 else "dark"
        mode = MODES[mode_name]
        gain = float(rng.uniform(*mode["gain"]))
        qvec = small_rotation_quat(rng)
        tvec = np.array([rng.uniform(-1.0, 1.0), rng.uniform(-0.8, 0.8),
                         rng.uniform(-0.8, 0.3)])
        poses.append((qvec, tvec, name))

        photo, hit = _render_photo(size, focal, qvec, tvec, mode, gain)
        labels = np.where(hit, CLASS_BUILDING, CLASS_SKY).astype(np.uint8)
        transient = bool(rng.random() < transient_share)
        if transient:
            _paste_person(photo, labels, rng)

        Image.fromarray((photo * 255).round().astype(np.uint8), "RGB").save(photos_dir / name)
        Image.fromarray(labels, mode="L").save(labels_dir / name)
        modes_record[str(i + 1)] = {"name": name, "mode": mode_name,
                                    "gain": gain, "transient": transient}

    _write_reconstruction(root / "recon", size, focal, poses, points, colors)
    meta = {"size": size, "seed": seed, "images": modes_record}
    (root / "modes.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
    return meta


def read_modes(root: str | Path) -> dict[int, str]:
    meta = json.loads((Path(root) / "modes.json").read_text())
    return {int(k): v["mode"] for k, v in meta["images"].items()}
