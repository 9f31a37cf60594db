"""Training losses: least-squares GAN, feature reconstruction, triplets."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn


def lsgan_discriminator_loss(real_logits, fake_logits) -> torch.Tensor:
    """Squared-error targets: real -> 1, fake -> 0, averaged over scales."""
    total = 0.0
    for real, fake in zip(real_logits, fake_logits):
        total = total + F.mse_loss(real, torch.ones_like(real))
        total = total + F.mse_loss(fake, torch.zeros_like(fake))
    return 0.5 * total / len(real_logits)


def lsgan_generator_loss(fake_logits) -> torch.Tensor:
    """Squared-error target: fake -> 1, averaged over scales."""
    total = 0.0
    for fake in fake_logits:
        total = total + F.mse_loss(fake, torch.ones_like(fake))
    return total / len(fake_logits)


class FeatureBank(nn.Module):
    """Frozen seeded random filterbank, mirroring the data toolkit's
    extractor: four levels of unit-normalized 3x3 kernels (16/32/64/128
    channels), rectified, 2x average-pooled between levels."""

    def __init__(self, seed: int = 0, levels: int = 4, base_kernels: int = 16):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.levels = levels
        in_channels = 3
        for level in range(levels):
            out_channels = base_kernels * 2 ** level
            bank = rng.standard_normal((out_channels, in_channels, 3, 3))
            bank /= np.sqrt(np.sum(bank * bank, axis=(1, 2, 3), keepdims=True))
            self.register_buffer(f"bank{level}", torch.from_numpy(bank).float())
            in_channels = out_channels

    def forward(self, image: torch.Tensor) -> list[torch.Tensor]:
        x = (image + 1.0) * 0.5  # feature space is defined on [0, 1] images
        pyramid = []
        for level in range(self.levels):
            if level > 0:
                x = F.avg_pool2d(pyramid[-1], 2)
            x = F.relu(F.conv2d(x, getattr(self, f"bank{level}"), padding=1))
            pyramid.append(x)
        return pyramid


class ReconstructionLoss(nn.Module):
    """w_l1 * L1 + w_feat * per-layer feature MSE under the frozen bank."""

    def __init__(self, feature_seed: int = 0, l1_weight: float = 1.0,
                 feature_weight: float = 1.0):
        super().__init__()
        self.bank = FeatureBank(seed=feature_seed)
        self.l1_weight = l1_weight
        self.feature_weight = feature_weight

    def forward(self, prediction: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
        loss = 0.0
        if self.l1_weight:
            loss = loss + self.l1_weight * F.l1_loss(prediction, target)
        if self.feature_weight:
            feats_pred = self.bank(prediction)
            feats_true = self.bank(target)
            feature_term = 0.0
            for fp, ft in zip(feats_pred, feats_true):
                feature_term = feature_term + F.mse_loss(fp, ft)
            loss = loss + self.feature_weight * feature_term
        return loss


def embedding_triplet_loss(z_anchor: torch.Tensor, z_positive: torch.Tensor,
                           z_negative: torch.Tensor, alpha: float) -> torch.Tensor:
    """Hinge on squared embedding distances, averaged over the batch."""
    d_pos = (z_anchor - z_positive).pow(2).sum(dim=1)
    d_neg = (z_anchor - z_negative).pow(2).sum(dim=1)
    return F.relu(d_pos - d_neg + alpha).mean()


def kl_divergence(mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """KL(N(mu, sigma) || N(0, 1)) averaged over the batch."""
    return (-0.5 * (1.0 + logvar - mu.pow(2) - logvar.exp()).sum(dim=1)).mean()


def check_finite(loss: torch.Tensor, context: str) -> torch.Tensor:
    if not torch.isfinite(loss):
        raise RuntimeError(f"non-finite loss at {context}: {loss.item()!r}")
    return loss
