"""Networks: rerenderer, appearance encoder, multiscale patch discriminator.

The rerenderer is a symmetric encoder-decoder with skip connections. Each
encoder block halves the resolution and applies two 3x3 convolutions with
leaky ReLU and pixel normalization; feature widths start at 64 and double
per block, capped at 512. The 8-dim appearance vector is tiled over the
bottleneck and injected by channel concatenation. Decoder blocks mirror
the encoder, concatenating the matching encoder features before each
upsampling. Images live in [-1, 1] inside the networks.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

PIXEL_NORM_EPS = 1e-8


def pixel_norm(features: torch.Tensor, eps: float = PIXEL_NORM_EPS) -> torch.Tensor:
    """Normalize each spatial location's channel vector to unit RMS."""
    return features / torch.sqrt(features.pow(2).mean(dim=1, keepdim=True) + eps)


class PixelNorm(nn.Module):
    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return pixel_norm(features)


def _conv_block(in_channels: int, out_channels: int, slope: float) -> nn.Sequential:
    """Two single-strided 3x3 convolutions with leaky ReLU and pixel norm."""
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, 3, padding=1),
        nn.LeakyReLU(slope, inplace=True),
        PixelNorm(),
        nn.Conv2d(out_channels, out_channels, 3, padding=1),
        nn.LeakyReLU(slope, inplace=True),
        PixelNorm(),
    )


@dataclass(frozen=True)
class RerendererConfig:
    in_channels: int = 8  # albedo 3 + depth + validity + semantics 3
    out_channels: int = 3
    base_channels: int = 64
    max_channels: int = 512
    blocks: int = 6
    leaky_slope: float = 0.2
    latent_dim: int = 8
    final_activation: str = "tanh"  # "tanh" for images, "none" for logits

    @property
    def encoder_widths(self) -> list[int]:
        return [min(self.base_channels * 2 ** i, self.max_channels) for i in range(self.blocks)]

    @property
    def size_multiple(self) -> int:
        return 2 ** self.blocks


class Rerenderer(nn.Module):
    """Deep buffer + appearance vector -> image (or per-pixel logits).

    With latent_dim = 0 the bottleneck injection disappears, which is the
    configuration used for the semantic prediction network.
    """

    def __init__(self, config: RerendererConfig = RerendererConfig()):
        super().__init__()
        self.config = config
        widths = config.encoder_widths
        slope = config.leaky_slope

        encoder = []
        in_ch = config.in_channels
        for width in widths:
            encoder.append(_conv_block(in_ch, width, slope))
            in_ch = width
        self.encoder = nn.ModuleList(encoder)

        bottleneck_in = widths[-1] + config.latent_dim
        self.fuse = nn.Sequential(
            nn.Conv2d(bottleneck_in, widths[-1], 3, padding=1),
            nn.LeakyReLU(slope, inplace=True),
            PixelNorm(),
        )

        decoder = []
        dec_widths = [config.base_channels] + widths[:-1]  # width after decoder block j
        x_width = widths[-1]
        for j in reversed(range(config.blocks)):
            decoder.append(_conv_block(x_width + widths[j], dec_widths[j], slope))
            x_width = dec_widths[j]
        self.decoder = nn.ModuleList(decoder)
        self.to_output = nn.Conv2d(dec_widths[0], config.out_channels, 3, padding=1)

    def forward(self, buffer: torch.Tensor, z: torch.Tensor | None = None) -> torch.Tensor:
        config = self.config
        if buffer.ndim != 4 or buffer.shape[1] != config.in_channels:
            raise ValueError(f"expected (B, {config.in_channels}, H, W) buffer, got {tuple(buffer.shape)}")
        height, width = buffer.shape[2], buffer.shape[3]
        if height % config.size_multiple or width % config.size_multiple:
            raise ValueError(f"spatial size must be divisible by {config.size_multiple}")

        skips = []
        x = buffer
        for block in self.encoder:
            x = block(F.avg_pool2d(x, 2))
            skips.append(x)

        if config.latent_dim:
            if z is None or z.shape != (buffer.shape[0], config.latent_dim):
                raise ValueError(f"expected z of shape (B, {config.latent_dim})")
            tiled = z[:, :, None, None].expand(-1, -1, x.shape[2], x.shape[3])
            x = torch.cat([x, tiled], dim=1)
        x = self.fuse(x)

        for block, skip in zip(self.decoder, reversed(skips)):
            x = torch.cat([x, skip], dim=1)
            x = block(F.interpolate(x, scale_factor=2, mode="nearest"))
        x = self.to_output(x)
        if config.final_activation == "tanh":
            x = torch.tanh(x)
        return x


def semantic_predictor(num_classes: int = 150, **overrides) -> Rerenderer:
    """Rendering architecture minus the injected appearance vector."""
    defaults = dict(latent_dim=0, out_channels=num_classes, final_activation="none")
    defaults.update(overrides)
    return Rerenderer(RerendererConfig(**defaults))


@dataclass(frozen=True)
class AppearanceEncoderConfig:
    in_channels: int = 11  # photo 3 + deep buffer 8
    base_channels: int = 64
    max_channels: int = 256
    downsamples: int = 4
    latent_dim: int = 8
    leaky_slope: float = 0.2
    variational: bool = False  # mu/logvar head for the baseline model


class AppearanceEncoder(nn.Module):
    """(image, deep buffer) -> 8-dim appearance embedding.

    Conv trunk with pixel norm after each downsampling block, global
    average pooling, and a linear head. The variational flag adds a logvar
    head used by the cross-cycle baseline.
    """

    def __init__(self, config: AppearanceEncoderConfig = AppearanceEncoderConfig()):
        super().__init__()
        self.config = config
        slope = config.leaky_slope
        layers = [
            nn.Conv2d(config.in_channels, config.base_channels, 3, padding=1),
            nn.LeakyReLU(slope, inplace=True),
        ]
        width = config.base_channels
        for _ in range(config.downsamples):
            next_width = min(width * 2, config.max_channels)
            layers += [
                nn.Conv2d(width, next_width, 3, stride=2, padding=1),
                nn.LeakyReLU(slope, inplace=True),
                PixelNorm(),
            ]
            width = next_width
        self.trunk = nn.Sequential(*layers)
        self.to_latent = nn.Linear(width, config.latent_dim)
        if config.variational:
            self.to_logvar = nn.Linear(width, config.latent_dim)
            # start near-deterministic so early sampling noise cannot teach
            # the renderer to ignore the latent
            nn.init.constant_(self.to_logvar.bias, -4.0)
        else:
            self.to_logvar = None

    def features(self, image: torch.Tensor, buffer: torch.Tensor) -> torch.Tensor:
        if image.shape[2:] != buffer.shape[2:]:
            raise ValueError(f"image {tuple(image.shape)} and buffer {tuple(buffer.shape)} disagree")
        x = self.trunk(torch.cat([image, buffer], dim=1))
        return x.mean(dim=(2, 3))

    def forward(self, image: torch.Tensor, buffer: torch.Tensor):
        pooled = self.features(image, buffer)
        mu = self.to_latent(pooled)
        if self.to_logvar is None:
            return mu
        return mu, self.to_logvar(pooled)

    @torch.no_grad()
    def encode(self, image: torch.Tensor, buffer: torch.Tensor) -> torch.Tensor:
        """Deterministic embedding (mu for variational encoders)."""
        was_training = self.training
        self.eval()
        out = self(image, buffer)
        if was_training:
            self.train()
        return out[0] if isinstance(out, tuple) else out


def interpolate_embeddings(z1: torch.Tensor, z2: torch.Tensor, t: float) -> torch.Tensor:
    """(1 - t) z1 + t z2 for t in [0, 1]."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    return (1.0 - t) * z1 + t * z2


class PatchDiscriminator(nn.Module):
    def __init__(self, in_channels: int, base_channels: int, layers: int, slope: float):
        super().__init__()
        seq = []
        width = in_channels
        out_width = base_channels
        for i in range(layers):
            seq += [
                nn.Conv2d(width, out_width, 4, stride=2, padding=1),
                nn.LeakyReLU(slope, inplace=True),
            ]
            width = out_width
            out_width = min(out_width * 2, 8 * base_channels)
        seq.append(nn.Conv2d(width, 1, 3, padding=1))
        self.net = nn.Sequential(*seq)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class MultiScaleDiscriminator(nn.Module):
    """Patch discriminators at full, 1/2, and 1/4 resolution (LSGAN logits)."""

    def __init__(self, in_channels: int = 11, base_channels: int = 64,
                 layers: int = 3, scales: int = 3, slope: float = 0.2):
        super().__init__()
        self.scales = scales
        self.heads = nn.ModuleList(
            PatchDiscriminator(in_channels, base_channels, layers, slope)
            for _ in range(scales)
        )

    def forward(self, condition: torch.Tensor, image: torch.Tensor) -> list[torch.Tensor]:
        x = torch.cat([condition, image], dim=1)
        logits = []
        for i, head in enumerate(self.heads):
            logits.append(head(x))
            if i + 1 < self.scales:
                x = F.avg_pool2d(x, 2)
        return logits


def param_hash(module: nn.Module) -> str:
    """Stable digest of all parameters, for stage-freezing checks."""
    digest = hashlib.sha256()
    for name, param in sorted(module.named_parameters()):
        digest.update(name.encode())
        digest.update(param.detach().cpu().numpy().tobytes())
    return digest.hexdigest()
