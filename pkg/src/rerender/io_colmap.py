"""SfM reconstruction interchange I/O (COLMAP-compatible layout).

Reads and writes the three-file sparse reconstruction layout:
``cameras.bin|txt``, ``images.bin|txt``, ``points3D.bin|txt``.

Binary files are little-endian throughout. Text files mirror the binary
fields with one record per line; the first non-comment line is the record
count and ``#`` starts a comment. Parsing stops after the declared number
of records; trailing bytes are ignored.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

INVALID_POINT3D_ID = 0xFFFFFFFFFFFFFFFF

_QUAT_NORM_TOL = 1e-6


class ReconstructionError(ValueError):
    """Base class for interchange file errors."""


class TruncatedStreamError(ReconstructionError):
    """File ended before the declared record count was read."""


class UnknownCameraModelError(ReconstructionError):
    """Camera model id or name outside the supported set."""


class DuplicateIdError(ReconstructionError):
    """Two records in one file share an id."""


class DanglingReferenceError(ReconstructionError):
    """A record references an id that does not exist."""


class CameraModel(enum.IntEnum):
    SIMPLE_PINHOLE = 0
    PINHOLE = 1
    SIMPLE_RADIAL = 2

    @property
    def num_params(self) -> int:
        return _MODEL_NUM_PARAMS[self]


_MODEL_NUM_PARAMS = {
    CameraModel.SIMPLE_PINHOLE: 3,  # f, cx, cy
    CameraModel.PINHOLE: 4,         # fx, fy, cx, cy
    CameraModel.SIMPLE_RADIAL: 4,   # f, cx, cy, k
}


@dataclass(eq=False)
class Camera:
    camera_id: int
    model: CameraModel
    width: int
    height: int
    params: np.ndarray  # float64, model-dependent length

    def __post_init__(self) -> None:
        self.model = CameraModel(self.model)
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (self.model.num_params,):
            raise ReconstructionError(
                f"camera {self.camera_id}: model {self.model.name} expects "
                f"{self.model.num_params} params, got {self.params.size}"
            )
        if self.width < 1 or self.height < 1:
            raise ReconstructionError(
                f"camera {self.camera_id}: non-positive size {self.width}x{self.height}"
            )
        if self.focal_lengths[0] <= 0 or self.focal_lengths[1] <= 0:
            raise ReconstructionError(f"camera {self.camera_id}: non-positive focal length")

    @property
    def focal_lengths(self) -> tuple[float, float]:
        """(fx, fy); equal for single-focal models."""
        if self.model is CameraModel.PINHOLE:
            return float(self.params[0]), float(self.params[1])
        return float(self.params[0]), float(self.params[0])

    @property
    def principal_point(self) -> tuple[float, float]:
        if self.model is CameraModel.PINHOLE:
            return float(self.params[2]), float(self.params[3])
        return float(self.params[1]), float(self.params[2])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Camera):
            return NotImplemented
        return (
            self.camera_id == other.camera_id
            and self.model == other.model
            and self.width == other.width
            and self.height == other.height
            and np.array_equal(self.params, other.params)
        )


@dataclass(eq=False)
class RegisteredImage:
    image_id: int
    qvec: np.ndarray  # unit quaternion (w, x, y, z), world -> camera
    tvec: np.ndarray  # translation, camera frame
    camera_id: int
    name: str
    xys: np.ndarray  # (n, 2) float64 pixel observations
    point3d_ids: np.ndarray  # (n,) uint64, INVALID_POINT3D_ID where unmatched

    def __post_init__(self) -> None:
        self.qvec = np.asarray(self.qvec, dtype=np.float64).reshape(4)
        self.tvec = np.asarray(self.tvec, dtype=np.float64).reshape(3)
        self.xys = np.asarray(self.xys, dtype=np.float64).reshape(-1, 2)
        self.point3d_ids = np.asarray(self.point3d_ids, dtype=np.uint64).reshape(-1)
        if self.point3d_ids.shape[0] != self.xys.shape[0]:
            raise ReconstructionError(f"image {self.image_id}: observation arrays disagree")
        if not self.name:
            raise ReconstructionError(f"image {self.image_id}: empty name")
        norm = float(np.linalg.norm(self.qvec))
        if abs(norm - 1.0) > _QUAT_NORM_TOL:
            raise ReconstructionError(
                f"image {self.image_id}: quaternion norm {norm} not unit within {_QUAT_NORM_TOL}"
            )

    @property
    def num_observations(self) -> int:
        return int(self.xys.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RegisteredImage):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and np.array_equal(self.qvec, other.qvec)
            and np.array_equal(self.tvec, other.tvec)
            and self.camera_id == other.camera_id
            and self.name == other.name
            and np.array_equal(self.xys, other.xys)
            and np.array_equal(self.point3d_ids, other.point3d_ids)
        )


@dataclass(eq=False)
class Point3D:
    point3d_id: int
    xyz: np.ndarray  # (3,) float64, world space
    rgb: np.ndarray  # (3,) uint8
    error: float  # reprojection error, pixels
    track: np.ndarray  # (m, 2) uint32 rows of (image_id, observation index)

    def __post_init__(self) -> None:
        self.xyz = np.asarray(self.xyz, dtype=np.float64).reshape(3)
        rgb = np.asarray(self.rgb)
        if rgb.dtype != np.uint8 and (rgb.min(initial=0) < 0 or rgb.max(initial=0) > 255):
            raise ReconstructionError(f"point {self.point3d_id}: rgb outside [0, 255]")
        self.rgb = rgb.astype(np.uint8).reshape(3)
        self.error = float(self.error)
        self.track = np.asarray(self.track, dtype=np.uint32).reshape(-1, 2)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Point3D):
            return NotImplemented
        return (
            self.point3d_id == other.point3d_id
            and np.array_equal(self.xyz, other.xyz)
            and np.array_equal(self.rgb, other.rgb)
            and self.error == other.error
            and np.array_equal(self.track, other.track)
        )


@dataclass(eq=True)
class Reconstruction:
    cameras: dict[int, Camera] = field(default_factory=dict)
    images: dict[int, RegisteredImage] = field(default_factory=dict)
    points: dict[int, Point3D] = field(default_factory=dict)

    def validate(self) -> None:
        """Check referential integrity between the three maps."""
        for image in self.images.values():
            if image.camera_id not in self.cameras:
                raise DanglingReferenceError(
                    f"image {image.image_id} references missing camera {image.camera_id}"
                )
        for point in self.points.values():
            for image_id, _ in point.track:
                if int(image_id) not in self.images:
                    raise DanglingReferenceError(
                        f"point {point.point3d_id} track references missing image {int(image_id)}"
                    )


class _Cursor:
    """Sequential reader over an in-memory byte buffer."""

    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def unpack(self, fmt: str, context: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise TruncatedStreamError(f"truncated stream at {context} in {self.what}")
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out

    def array(self, dtype: np.dtype, count: int, context: str) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        if self.pos + size > len(self.data):
            raise TruncatedStreamError(f"truncated stream at {context} in {self.what}")
        out = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.pos).copy()
        self.pos += size
        return out

    def cstring(self, context: str) -> str:
        end = self.data.find(b"\x00", self.pos)
        if end < 0:
            raise TruncatedStreamError(f"truncated stream at {context} in {self.what}")
        out = self.data[self.pos:end].decode("utf-8")
        self.pos = end + 1
        return out


def _check_new_id(existing: dict, record_id: int, what: str) -> None:
    if record_id in existing:
        raise DuplicateIdError(f"duplicate {what} id {record_id}")


def _parse_cameras_binary(data: bytes) -> dict[int, Camera]:
    cur = _Cursor(data, "cameras file")
    (count,) = cur.unpack("<Q", "header")
    cameras: dict[int, Camera] = {}
    for k in range(count):
        ctx = f"camera {k}"
        camera_id, model_id, width, height = cur.unpack("<IiQQ", ctx)
        try:
            model = CameraModel(model_id)
        except ValueError:
            raise UnknownCameraModelError(f"unknown camera model id {model_id}") from None
        params = cur.array(np.dtype("<f8"), model.num_params, ctx)
        _check_new_id(cameras, camera_id, "camera")
        cameras[camera_id] = Camera(camera_id, model, int(width), int(height), params)
    return cameras


def _parse_images_binary(data: bytes) -> dict[int, RegisteredImage]:
    cur = _Cursor(data, "images file")
    (count,) = cur.unpack("<Q", "header")
    images: dict[int, RegisteredImage] = {}
    for k in range(count):
        ctx = f"image {k}"
        (image_id,) = cur.unpack("<I", ctx)
        qvec = cur.array(np.dtype("<f8"), 4, ctx)
        tvec = cur.array(np.dtype("<f8"), 3, ctx)
        (camera_id,) = cur.unpack("<I", ctx)
        name = cur.cstring(ctx)
        (num_obs,) = cur.unpack("<Q", ctx)
        obs = cur.array(np.dtype([("x", "<f8"), ("y", "<f8"), ("pid", "<u8")]), num_obs, ctx)
        xys = np.column_stack([obs["x"], obs["y"]]) if num_obs else np.empty((0, 2))
        _check_new_id(images, image_id, "image")
        images[image_id] = RegisteredImage(
            image_id, qvec, tvec, int(camera_id), name, xys, obs["pid"]
        )
    return images


def _parse_points_binary(data: bytes) -> dict[int, Point3D]:
    cur = _Cursor(data, "points file")
    (count,) = cur.unpack("<Q", "header")
    points: dict[int, Point3D] = {}
    for k in range(count):
        ctx = f"point {k}"
        (point3d_id,) = cur.unpack("<Q", ctx)
        xyz = cur.array(np.dtype("<f8"), 3, ctx)
        rgb = cur.array(np.dtype("u1"), 3, ctx)
        (error,) = cur.unpack("<d", ctx)
        (track_len,) = cur.unpack("<Q", ctx)
        track = cur.array(np.dtype("<u4"), 2 * track_len, ctx).reshape(-1, 2)
        _check_new_id(points, point3d_id, "point")
        points[point3d_id] = Point3D(point3d_id, xyz, rgb, float(error), track)
    return points


def _text_records(data: str):
    """Yield whitespace-split non-comment lines; first yield is the count line."""
    for line in data.splitlines():
        stripped = line.split("#", 1)[0].strip()
        if stripped:
            yield stripped.split()


def _take_record(lines, what: str, context: str) -> list[str]:
    try:
        return next(lines)
    except StopIteration:
        raise TruncatedStreamError(f"truncated stream at {context} in {what}") from None


def _parse_cameras_text(data: str) -> dict[int, Camera]:
    what = "cameras file"
    lines = _text_records(data)
    count = int(_take_record(lines, what, "header")[0])
    cameras: dict[int, Camera] = {}
    for k in range(count):
        ctx = f"camera {k}"
        rec = _take_record(lines, what, ctx)
        camera_id = int(rec[0])
        try:
            model = CameraModel[rec[1]]
        except KeyError:
            raise UnknownCameraModelError(f"unknown camera model {rec[1]!r}") from None
        width, height = int(rec[2]), int(rec[3])
        params = rec[4:4 + model.num_params]
        if len(params) < model.num_params:
            raise TruncatedStreamError(f"truncated stream at {ctx} in {what}")
        _check_new_id(cameras, camera_id, "camera")
        cameras[camera_id] = Camera(
            camera_id, model, width, height, np.array([float(p) for p in params])
        )
    return cameras


def _parse_images_text(data: str) -> dict[int, RegisteredImage]:
    what = "images file"
    lines = _text_records(data)
    count = int(_take_record(lines, what, "header")[0])
    images: dict[int, RegisteredImage] = {}
    for k in range(count):
        ctx = f"image {k}"
        rec = _take_record(lines, what, ctx)
        if len(rec) < 11:
            raise TruncatedStreamError(f"truncated stream at {ctx} in {what}")
        image_id = int(rec[0])
        qvec = np.array([float(v) for v in rec[1:5]])
        tvec = np.array([float(v) for v in rec[5:8]])
        camera_id = int(rec[8])
        name = rec[9]
        num_obs = int(rec[10])
        fields = rec[11:11 + 3 * num_obs]
        if len(fields) < 3 * num_obs:
            raise TruncatedStreamError(f"truncated stream at {ctx} in {what}")
        xys = np.array(
            [[float(fields[3 * i]), float(fields[3 * i + 1])] for i in range(num_obs)]
        ).reshape(-1, 2)
        pids = np.array(
            [INVALID_POINT3D_ID if int(fields[3 * i + 2]) < 0 else int(fields[3 * i + 2])
             for i in range(num_obs)],
            dtype=np.uint64,
        )
        _check_new_id(images, image_id, "image")
        images[image_id] = RegisteredImage(image_id, qvec, tvec, camera_id, name, xys, pids)
    return images


def _parse_points_text(data: str) -> dict[int, Point3D]:
    what = "points file"
    lines = _text_records(data)
    count = int(_take_record(lines, what, "header")[0])
    points: dict[int, Point3D] = {}
    for k in range(count):
        ctx = f"point {k}"
        rec = _take_record(lines, what, ctx)
        if len(rec) < 9:
            raise TruncatedStreamError(f"truncated stream at {ctx} in {what}")
        point3d_id = int(rec[0])
        xyz = np.array([float(v) for v in rec[1:4]])
        rgb = np.array([int(v) for v in rec[4:7]])
        error = float(rec[7])
        track_len = int(rec[8])
        fields = rec[9:9 + 2 * track_len]
        if len(fields) < 2 * track_len:
            raise TruncatedStreamError(f"truncated stream at {ctx} in {what}")
        track = np.array([int(v) for v in fields], dtype=np.uint32).reshape(-1, 2)
        _check_new_id(points, point3d_id, "point")
        points[point3d_id] = Point3D(point3d_id, xyz, rgb, error, track)
    return points


def parse_reconstruction(directory: str | Path, format: str = "binary") -> Reconstruction:
    """Parse cameras/images/points3D files from ``directory``.

    ``format`` is ``"binary"`` or ``"text"``. Raises a ReconstructionError
    subclass on truncated streams, unknown camera models, duplicate ids, or
    dangling references.
    """
    directory = Path(directory)
    if format == "binary":
        cameras = _parse_cameras_binary((directory / "cameras.bin").read_bytes())
        images = _parse_images_binary((directory / "images.bin").read_bytes())
        points = _parse_points_binary((directory / "points3D.bin").read_bytes())
    elif format == "text":
        cameras = _parse_cameras_text((directory / "cameras.txt").read_text())
        images = _parse_images_text((directory / "images.txt").read_text())
        points = _parse_points_text((directory / "points3D.txt").read_text())
    else:
        raise ValueError(f"unknown format {format!r}")
    recon = Reconstruction(cameras, images, points)
    recon.validate()
    return recon


def _serialize_cameras_binary(cameras: dict[int, Camera]) -> bytes:
    parts = [struct.pack("<Q", len(cameras))]
    for cam in sorted(cameras.values(), key=lambda c: c.camera_id):
        parts.append(struct.pack("<IiQQ", cam.camera_id, int(cam.model), cam.width, cam.height))
        parts.append(cam.params.astype("<f8").tobytes())
    return b"".join(parts)


def _serialize_images_binary(images: dict[int, RegisteredImage]) -> bytes:
    parts = [struct.pack("<Q", len(images))]
    for img in sorted(images.values(), key=lambda i: i.image_id):
        parts.append(struct.pack("<I", img.image_id))
        parts.append(img.qvec.astype("<f8").tobytes())
        parts.append(img.tvec.astype("<f8").tobytes())
        parts.append(struct.pack("<I", img.camera_id))
        parts.append(img.name.encode("utf-8") + b"\x00")
        parts.append(struct.pack("<Q", img.num_observations))
        obs = np.empty(img.num_observations, dtype=[("x", "<f8"), ("y", "<f8"), ("pid", "<u8")])
        obs["x"], obs["y"] = img.xys[:, 0], img.xys[:, 1]
        obs["pid"] = img.point3d_ids
        parts.append(obs.tobytes())
    return b"".join(parts)


def _serialize_points_binary(points: dict[int, Point3D]) -> bytes:
    parts = [struct.pack("<Q", len(points))]
    for pt in sorted(points.values(), key=lambda p: p.point3d_id):
        parts.append(struct.pack("<Q", pt.point3d_id))
        parts.append(pt.xyz.astype("<f8").tobytes())
        parts.append(pt.rgb.tobytes())
        parts.append(struct.pack("<dQ", pt.error, pt.track.shape[0]))
        parts.append(pt.track.astype("<u4").tobytes())
    return b"".join(parts)


def _fmt(x: float) -> str:
    return repr(float(x))


def _serialize_cameras_text(cameras: dict[int, Camera]) -> str:
    lines = ["# count, then: camera_id model width height params[]", str(len(cameras))]
    for cam in sorted(cameras.values(), key=lambda c: c.camera_id):
        fields = [str(cam.camera_id), cam.model.name, str(cam.width), str(cam.height)]
        fields += [_fmt(p) for p in cam.params]
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def _serialize_images_text(images: dict[int, RegisteredImage]) -> str:
    lines = [
        "# count, then: image_id qw qx qy qz tx ty tz camera_id name num_obs (x y point3d_id)*",
        str(len(images)),
    ]
    for img in sorted(images.values(), key=lambda i: i.image_id):
        if any(c.isspace() for c in img.name):
            raise ReconstructionError(
                f"image {img.image_id}: name with whitespace not representable in text form"
            )
        fields = [str(img.image_id)]
        fields += [_fmt(v) for v in img.qvec]
        fields += [_fmt(v) for v in img.tvec]
        fields += [str(img.camera_id), img.name, str(img.num_observations)]
        for (x, y), pid in zip(img.xys, img.point3d_ids):
            pid_txt = "-1" if int(pid) == INVALID_POINT3D_ID else str(int(pid))
            fields += [_fmt(x), _fmt(y), pid_txt]
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def _serialize_points_text(points: dict[int, Point3D]) -> str:
    lines = [
        "# count, then: point3d_id x y z r g b error track_len (image_id obs_idx)*",
        str(len(points)),
    ]
    for pt in sorted(points.values(), key=lambda p: p.point3d_id):
        fields = [str(pt.point3d_id)]
        fields += [_fmt(v) for v in pt.xyz]
        fields += [str(int(v)) for v in pt.rgb]
        fields += [_fmt(pt.error), str(pt.track.shape[0])]
        fields += [str(int(v)) for v in pt.track.reshape(-1)]
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def serialize_reconstruction(
    recon: Reconstruction, directory: str | Path, format: str = "binary"
) -> None:
    """Write the three interchange files, records in canonical id order."""
    recon.validate()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if format == "binary":
        (directory / "cameras.bin").write_bytes(_serialize_cameras_binary(recon.cameras))
        (directory / "images.bin").write_bytes(_serialize_images_binary(recon.images))
        (directory / "points3D.bin").write_bytes(_serialize_points_binary(recon.points))
    elif format == "text":
        (directory / "cameras.txt").write_text(_serialize_cameras_text(recon.cameras))
        (directory / "images.txt").write_text(_serialize_images_text(recon.images))
        (directory / "points3D.txt").write_text(_serialize_points_text(recon.points))
    else:
        raise ValueError(f"unknown format {format!r}")
