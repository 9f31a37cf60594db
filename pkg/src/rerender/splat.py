"""Z-buffered point splatting into deferred-shading deep buffers.

Each point is projected and splatted over a small pixel footprint; the
minimum-depth point wins each pixel, with ties on exactly equal depth
resolved toward the smaller point id. Rendering is deterministic for any
worker count: points are partitioned into per-worker z-buffers that are
merged by lexicographic (depth, id) minimum, which reproduces the
sequential result exactly.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .camera import Viewpoint, quat_to_matrix
from .io_colmap import CameraModel, Reconstruction

BASE_CHANNELS = ("albedo_r", "albedo_g", "albedo_b", "depth", "validity")
SEMANTIC_CHANNELS = ("semantic_r", "semantic_g", "semantic_b")

_NRDB_MAGIC = b"NRDB"
_NRDB_VERSION = 1


@dataclass(frozen=True)
class PointCloudView:
    """Flat array view of a colored point cloud; ids must be unique."""

    xyz: np.ndarray  # (N, 3) float64
    rgb: np.ndarray  # (N, 3) uint8
    ids: np.ndarray  # (N,) uint64

    def __post_init__(self) -> None:
        object.__setattr__(self, "xyz", np.ascontiguousarray(self.xyz, dtype=np.float64))
        object.__setattr__(self, "rgb", np.ascontiguousarray(self.rgb, dtype=np.uint8))
        object.__setattr__(self, "ids", np.ascontiguousarray(self.ids, dtype=np.uint64))
        n = self.xyz.shape[0]
        if self.xyz.shape != (n, 3) or self.rgb.shape != (n, 3) or self.ids.shape != (n,):
            raise ValueError("point cloud arrays disagree in shape")

    def __len__(self) -> int:
        return int(self.xyz.shape[0])

    @classmethod
    def from_reconstruction(cls, recon: Reconstruction) -> "PointCloudView":
        n = len(recon.points)
        xyz = np.empty((n, 3))
        rgb = np.empty((n, 3), dtype=np.uint8)
        ids = np.empty(n, dtype=np.uint64)
        for row, pid in enumerate(sorted(recon.points)):
            pt = recon.points[pid]
            xyz[row] = pt.xyz
            rgb[row] = pt.rgb
            ids[row] = pid
        return cls(xyz, rgb, ids)


class DeepBuffer:
    """Multi-channel raster: albedo RGB, depth, validity, optional semantics.

    Planes are float32, shape (channels, height, width). Empty pixels carry
    depth 0, validity 0, and black albedo.
    """

    def __init__(self, data: np.ndarray, channels: tuple[str, ...] = BASE_CHANNELS):
        data = np.asarray(data, dtype=np.float32)
        if data.ndim != 3 or data.shape[0] != len(channels):
            raise ValueError(f"expected ({len(channels)}, H, W) planes, got {data.shape}")
        self.data = data
        self.data.flags.writeable = False
        self.channels = tuple(channels)

    @property
    def height(self) -> int:
        return int(self.data.shape[1])

    @property
    def width(self) -> int:
        return int(self.data.shape[2])

    def plane(self, name: str) -> np.ndarray:
        return self.data[self.channels.index(name)]

    @property
    def albedo(self) -> np.ndarray:
        return self.data[0:3]

    @property
    def depth(self) -> np.ndarray:
        return self.plane("depth")

    @property
    def validity(self) -> np.ndarray:
        return self.plane("validity")

    @property
    def semantic(self) -> np.ndarray | None:
        if self.channels[-3:] == SEMANTIC_CHANNELS:
            return self.data[-3:]
        return None

    def with_semantics(self, semantic: np.ndarray) -> "DeepBuffer":
        """Return a copy with three semantic channels appended."""
        semantic = np.asarray(semantic, dtype=np.float32)
        if semantic.shape != (3, self.height, self.width):
            raise ValueError(f"semantic planes must be (3, {self.height}, {self.width})")
        if self.semantic is not None:
            raise ValueError("buffer already carries semantic channels")
        return DeepBuffer(
            np.concatenate([self.data, semantic], axis=0),
            self.channels + SEMANTIC_CHANNELS,
        )

    def validate(self) -> None:
        if not np.all(np.isfinite(self.data)):
            raise ValueError("non-finite values in deep buffer")
        empty = self.validity == 0
        if np.any(self.depth < 0):
            raise ValueError("negative depth")
        if np.any(self.depth[empty] != 0) or np.any(self.albedo[:, empty] != 0):
            raise ValueError("empty pixels must carry zero depth and albedo")
        if np.any(self.depth[~empty] == 0):
            raise ValueError("valid pixels must carry positive depth")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DeepBuffer):
            return NotImplemented
        return self.channels == other.channels and np.array_equal(self.data, other.data)


def footprint_offsets(radius: float, footprint: str = "cross") -> np.ndarray:
    """Integer pixel offsets covered by a splat of the given radius.

    "cross" keeps offsets within Euclidean distance radius of the center
    (radius 1 is the 5-pixel cross); "square" keeps the Chebyshev box.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    reach = int(math.floor(radius))
    offsets = []
    for oy in range(-reach, reach + 1):
        for ox in range(-reach, reach + 1):
            if footprint == "cross":
                if ox * ox + oy * oy <= radius * radius:
                    offsets.append((ox, oy))
            elif footprint == "square":
                offsets.append((ox, oy))
            else:
                raise ValueError(f"unknown footprint {footprint!r}")
    return np.asarray(offsets, dtype=np.int64).reshape(-1, 2)


@numba.njit(cache=True, nogil=True)
def _splat_range(xyz, ids, lo, hi, R, t, fx, fy, cx, cy, k,
                 offsets, height, width, best_depth, best_id, best_row):
    for i in range(lo, hi):
        px = xyz[i, 0]
        py = xyz[i, 1]
        pz = xyz[i, 2]
        xc = R[0, 0] * px + R[0, 1] * py + R[0, 2] * pz + t[0]
        yc = R[1, 0] * px + R[1, 1] * py + R[1, 2] * pz + t[1]
        zc = R[2, 0] * px + R[2, 1] * py + R[2, 2] * pz + t[2]
        if zc <= 1e-6:
            continue
        xn = xc / zc
        yn = yc / zc
        r2 = xn * xn + yn * yn
        d = 1.0 + k * r2
        u = fx * (xn * d) + cx
        v = fy * (yn * d) + cy
        fu = math.floor(u)
        fv = math.floor(v)
        point_id = ids[i]
        for j in range(offsets.shape[0]):
            colf = fu + offsets[j, 0]
            rowf = fv + offsets[j, 1]
            if colf < 0.0 or colf >= width or rowf < 0.0 or rowf >= height:
                continue
            col = np.int64(colf)
            row = np.int64(rowf)
            cur = best_depth[row, col]
            if zc < cur or (zc == cur and point_id < best_id[row, col]):
                best_depth[row, col] = zc
                best_id[row, col] = point_id
                best_row[row, col] = i


def _intrinsics(viewpoint: Viewpoint) -> tuple[float, float, float, float, float]:
    cam = viewpoint.camera
    p = cam.params
    if cam.model is CameraModel.PINHOLE:
        return float(p[0]), float(p[1]), float(p[2]), float(p[3]), 0.0
    if cam.model is CameraModel.SIMPLE_PINHOLE:
        return float(p[0]), float(p[0]), float(p[1]), float(p[2]), 0.0
    return float(p[0]), float(p[0]), float(p[1]), float(p[2]), float(p[3])


def render(
    points: PointCloudView,
    viewpoint: Viewpoint,
    radius: float = 1.0,
    footprint: str = "cross",
    threads: int = 1,
) -> DeepBuffer:
    """Splat the point cloud from the viewpoint into a deep buffer.

    threads > 1 partitions points across workers; the merged result is
    bit-identical to the single-threaded render.
    """
    cam = viewpoint.camera
    height, width = cam.height, cam.width
    if height < 1 or width < 1:
        raise ValueError("zero-sized viewport")
    offsets = footprint_offsets(radius, footprint)
    R = quat_to_matrix(viewpoint.rotation)
    t = np.asarray(viewpoint.translation, dtype=np.float64)
    fx, fy, cx, cy, k = _intrinsics(viewpoint)

    n = len(points)
    threads = max(1, min(int(threads), max(1, n)))
    bounds = np.linspace(0, n, threads + 1).astype(np.int64)

    def run(lo: int, hi: int):
        best_depth = np.full((height, width), np.inf)
        best_id = np.full((height, width), np.uint64(0xFFFFFFFFFFFFFFFF))
        best_row = np.full((height, width), -1, dtype=np.int64)
        _splat_range(points.xyz, points.ids, lo, hi, R, t, fx, fy, cx, cy, k,
                     offsets, height, width, best_depth, best_id, best_row)
        return best_depth, best_id, best_row

    if threads == 1:
        best_depth, best_id, best_row = run(0, n)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: run(*b), zip(bounds[:-1], bounds[1:])))
        best_depth, best_id, best_row = parts[0]
        for depth_w, id_w, row_w in parts[1:]:
            take = (depth_w < best_depth) | ((depth_w == best_depth) & (id_w < best_id))
            best_depth = np.where(take, depth_w, best_depth)
            best_id = np.where(take, id_w, best_id)
            best_row = np.where(take, row_w, best_row)

    return compose_buffer(best_depth, best_row, points.rgb)


def compose_buffer(best_depth: np.ndarray, best_row: np.ndarray, rgb: np.ndarray) -> DeepBuffer:
    """Assemble winner indices and depths into DeepBuffer planes."""
    height, width = best_depth.shape
    valid = best_row >= 0
    data = np.zeros((len(BASE_CHANNELS), height, width), dtype=np.float32)
    rows = best_row[valid]
    albedo = rgb[rows].astype(np.float32) / np.float32(255)
    for c in range(3):
        data[c][valid] = albedo[:, c]
    data[3][valid] = best_depth[valid].astype(np.float32)
    data[4][valid] = 1.0
    return DeepBuffer(data)


def empty_fraction(buffer: DeepBuffer) -> float:
    """Fraction of pixels no splat landed on."""
    total = buffer.height * buffer.width
    return float(np.count_nonzero(buffer.validity == 0)) / total


def write_nrdb(buffer: DeepBuffer, path: str | Path) -> None:
    """Write the NRDB container: header, channel-name table, f32 planes."""
    parts = [
        _NRDB_MAGIC,
        struct.pack("<IIII", _NRDB_VERSION, buffer.height, buffer.width, len(buffer.channels)),
    ]
    for name in buffer.channels:
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
    parts.append(np.ascontiguousarray(buffer.data, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_nrdb(path: str | Path) -> DeepBuffer:
    data = Path(path).read_bytes()
    if data[:4] != _NRDB_MAGIC:
        raise ValueError(f"{path}: not an NRDB container")
    version, height, width, channel_count = struct.unpack_from("<IIII", data, 4)
    if version != _NRDB_VERSION:
        raise ValueError(f"{path}: unsupported NRDB version {version}")
    pos = 20
    channels = []
    for _ in range(channel_count):
        (length,) = struct.unpack_from("<I", data, pos)
        pos += 4
        channels.append(data[pos:pos + length].decode("utf-8"))
        pos += length
    count = channel_count * height * width
    if len(data) - pos < 4 * count:
        raise ValueError(f"{path}: truncated NRDB payload")
    planes = np.frombuffer(data, dtype="<f4", count=count, offset=pos)
    return DeepBuffer(planes.reshape(channel_count, height, width).copy(), tuple(channels))
