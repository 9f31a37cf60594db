"""Viewpoint projection and intrinsic rescaling.

A viewpoint is the camera pose (world-to-camera rotation and translation)
plus intrinsics. Projection returns continuous pixel coordinates; pixel
(u, v) covers [u, u+1) x [v, v+1) and rasterization rounds by floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .io_colmap import Camera, CameraModel

Z_NEAR = 1e-6


class Projection(NamedTuple):
    u: float
    v: float
    depth: float


@dataclass(frozen=True)
class Viewpoint:
    rotation: tuple[float, float, float, float]  # unit quaternion (w, x, y, z), world -> camera
    translation: tuple[float, float, float]
    camera: Camera

    def __post_init__(self) -> None:
        object.__setattr__(self, "rotation", tuple(float(v) for v in self.rotation))
        object.__setattr__(self, "translation", tuple(float(v) for v in self.translation))
        norm = math.sqrt(sum(v * v for v in self.rotation))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {norm} not unit within 1e-6")

    @property
    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)


def quat_to_matrix(q) -> np.ndarray:
    """3x3 rotation matrix for a unit quaternion (w, x, y, z)."""
    w, x, y, z = (float(v) for v in q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotate_quat(q, p) -> np.ndarray:
    """Rotate vector p by unit quaternion q (w, x, y, z) without forming a matrix."""
    w, x, y, z = (float(v) for v in q)
    px, py, pz = (float(v) for v in p)
    # t = 2 q_vec x p, out = p + w t + q_vec x t
    tx = 2.0 * (y * pz - z * py)
    ty = 2.0 * (z * px - x * pz)
    tz = 2.0 * (x * py - y * px)
    return np.array(
        [
            px + w * tx + (y * tz - z * ty),
            py + w * ty + (z * tx - x * tz),
            pz + w * tz + (x * ty - y * tx),
        ]
    )


def project(p, viewpoint: Viewpoint) -> Optional[Projection]:
    """Project world point p; None when camera-space z <= Z_NEAR.

    Applies the intrinsic mapping of (x/z, y/z), with radial distortion for
    SIMPLE_RADIAL. Operation order matches the batch renderer so results
    agree bit for bit.
    """
    R = viewpoint.rotation_matrix
    t = viewpoint.translation
    px, py, pz = (float(v) for v in p)
    xc = R[0, 0] * px + R[0, 1] * py + R[0, 2] * pz + t[0]
    yc = R[1, 0] * px + R[1, 1] * py + R[1, 2] * pz + t[1]
    zc = R[2, 0] * px + R[2, 1] * py + R[2, 2] * pz + t[2]
    if zc <= Z_NEAR:
        return None
    xn = xc / zc
    yn = yc / zc
    cam = viewpoint.camera
    params = cam.params
    if cam.model is CameraModel.PINHOLE:
        u = params[0] * xn + params[2]
        v = params[1] * yn + params[3]
    elif cam.model is CameraModel.SIMPLE_PINHOLE:
        u = params[0] * xn + params[1]
        v = params[0] * yn + params[2]
    else:  # SIMPLE_RADIAL
        r2 = xn * xn + yn * yn
        d = 1.0 + params[3] * r2
        u = params[0] * (xn * d) + params[1]
        v = params[0] * (yn * d) + params[2]
    return Projection(float(u), float(v), float(zc))


def scale_to_min_dim(viewpoint: Viewpoint, min_dim: int) -> Viewpoint:
    """Rescale intrinsics so min(width, height) = min_dim, preserving aspect.

    Focal lengths and principal point scale by the same factor; the radial
    distortion coefficient acts on normalized coordinates and is unchanged.
    """
    if min_dim < 1:
        raise ValueError("min_dim must be >= 1")
    cam = viewpoint.camera
    scale = min_dim / min(cam.width, cam.height)
    if cam.width <= cam.height:
        width, height = min_dim, int(math.floor(cam.height * scale + 0.5))
    else:
        width, height = int(math.floor(cam.width * scale + 0.5)), min_dim
    params = cam.params.copy()
    if cam.model is CameraModel.SIMPLE_RADIAL:
        params[:3] *= scale  # k unchanged
    else:
        params *= scale
    scaled = Camera(cam.camera_id, cam.model, width, height, params)
    return Viewpoint(viewpoint.rotation, viewpoint.translation, scaled)
