"""Appearance transfer, path rendering, and embedding export."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .data import load_buffer, load_photo
from .formats import write_embeddings
from .nets import AppearanceEncoder, Rerenderer, interpolate_embeddings


def pad_to_multiple(x: torch.Tensor, multiple: int) -> tuple[torch.Tensor, tuple[int, int]]:
    """Zero-pad (B, C, H, W) on the bottom/right to the next multiple."""
    height, width = x.shape[2], x.shape[3]
    pad_h = (-height) % multiple
    pad_w = (-width) % multiple
    if pad_h or pad_w:
        x = F.pad(x, (0, pad_w, 0, pad_h))
    return x, (height, width)


@torch.no_grad()
def rerender(renderer: Rerenderer, buffer: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
    """Run the renderer with internal padding and crop back to the input size."""
    renderer.eval()
    padded, (height, width) = pad_to_multiple(buffer, renderer.config.size_multiple)
    out = renderer(padded, z)
    return out[:, :, :height, :width]


@torch.no_grad()
def transfer_appearance(
    renderer: Rerenderer,
    encoder: AppearanceEncoder,
    source_photo: torch.Tensor,
    source_buffer: torch.Tensor,
    target_buffers: list[torch.Tensor],
) -> tuple[torch.Tensor, list[torch.Tensor]]:
    """Encode the source appearance and rerender each target under it.

    Returns (z, images); every target shares the identical z.
    """
    z = encoder.encode(source_photo[None], source_buffer[None])
    outputs = [rerender(renderer, buffer[None], z)[0] for buffer in target_buffers]
    return z[0], outputs


@torch.no_grad()
def render_path(
    renderer: Rerenderer,
    encoder: AppearanceEncoder,
    buffers: list[torch.Tensor],
    z_start: torch.Tensor,
    z_end: torch.Tensor,
    frames: int,
) -> list[torch.Tensor]:
    """One frame per viewpoint with z linearly interpolated along the path.

    A single buffer is repeated for every frame (fixed-viewpoint appearance
    interpolation); otherwise one buffer per frame is required.
    """
    if frames < 2:
        raise ValueError("need at least 2 frames to interpolate")
    if len(buffers) == 1:
        buffers = buffers * frames
    if len(buffers) != frames:
        raise ValueError(f"need 1 or {frames} buffers, got {len(buffers)}")
    outputs = []
    for index, buffer in enumerate(buffers):
        t = index / (frames - 1)
        z = interpolate_embeddings(z_start, z_end, t)
        outputs.append(rerender(renderer, buffer[None], z)[0])
    return outputs


def to_image(frame: torch.Tensor) -> Image.Image:
    """[-1, 1] tensor -> PIL image."""
    array = ((frame.clamp(-1, 1) + 1) * 127.5).byte().cpu().numpy().transpose(1, 2, 0)
    return Image.fromarray(array, "RGB")


def mean_luminance(frame: torch.Tensor) -> float:
    """Mean Rec. 601 luma of a [-1, 1] image, on the [0, 1] scale."""
    rgb = (frame.clamp(-1, 1) + 1) * 0.5
    weights = torch.tensor([0.299, 0.587, 0.114], dtype=rgb.dtype)
    return float((rgb * weights[:, None, None]).sum(dim=0).mean())


def write_frames(frames: list[torch.Tensor], out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for index, frame in enumerate(frames):
        path = out_dir / f"frame_{index:04d}.png"
        to_image(frame).save(path)
        paths.append(path)
    return paths


@torch.no_grad()
def export_embeddings(encoder: AppearanceEncoder, cache, out_path: str | Path) -> None:
    """JSON-lines of (image_id, 8 floats) for every cached sample."""
    rows = []
    for item in cache.loaded:
        z = encoder.encode(item.photo[None], item.buffer[None])[0]
        rows.append((item.image_id, z.tolist()))
    write_embeddings(out_path, rows)


def load_buffer_tensor(path: str | Path) -> torch.Tensor:
    return load_buffer(path)


def load_photo_tensor(path: str | Path) -> torch.Tensor:
    return load_photo(path)
