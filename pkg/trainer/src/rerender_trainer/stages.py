"""Staged training: appearance pretraining, renderer training with frozen
embeddings, joint finetuning; plus the cross-cycle baseline and the
semantic prediction network.

Stage order is enforced and the appearance encoder's parameter hash is
checked to be constant across stage 2. Every logged step asserts finite
losses. Fixed seeds make runs reproducible on a single device.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .data import SampleCache, cache_for, epoch_batches
from .formats import Manifest
from .losses import (
    ReconstructionLoss,
    check_finite,
    embedding_triplet_loss,
    kl_divergence,
    lsgan_discriminator_loss,
    lsgan_generator_loss,
)
from .nets import (
    AppearanceEncoder,
    AppearanceEncoderConfig,
    MultiScaleDiscriminator,
    Rerenderer,
    RerendererConfig,
    param_hash,
    semantic_predictor,
)

STAGES = ("pretrain_appearance", "train_renderer", "finetune_joint")

# channels 0:5 of the deep buffer (albedo, depth, validity): the semantic
# predictor must not see the encoded label channels it is asked to predict
GEOMETRY_CHANNELS = 5

DEFAULT_TRANSIENT_IDS = (12, 20, 76, 80, 83, 90, 102, 116, 126, 127)


@dataclass(frozen=True)
class StageSchedule:
    """Epochs, learning rates, and loss weights for the three stages."""

    epochs: tuple[int, int, int] = (10, 20, 5)
    lr: float = 2e-4
    finetune_lr_scale: float = 0.5  # stage-3 rate is lr * scale
    w_rec: float = 10.0
    w_gan: float = 1.0
    alpha: float = 0.3

    def __post_init__(self) -> None:
        if len(self.epochs) != 3 or any(e < 0 for e in self.epochs):
            raise ValueError("epochs must be three nonnegative counts")


@dataclass(frozen=True)
class TrainConfig:
    latent_dim: int = 8
    buffer_channels: int = 8
    g_base: int = 64
    g_max: int = 512
    g_blocks: int = 6
    e_base: int = 64
    e_max: int = 256
    e_downsamples: int = 4
    d_base: int = 64
    d_layers: int = 3
    d_scales: int = 3
    crop: int | None = 256
    batch_size: int = 8
    feature_seed: int = 0
    l1_weight: float = 1.0
    feature_weight: float = 1.0
    w_kl: float = 0.01
    w_latent: float = 0.5
    w_cross: float = 10.0
    num_classes: int = 150
    transient_class_ids: tuple[int, ...] = DEFAULT_TRANSIENT_IDS
    seed: int = 0
    device: str = "cpu"

    def renderer_config(self) -> RerendererConfig:
        return RerendererConfig(
            in_channels=self.buffer_channels,
            base_channels=self.g_base,
            max_channels=self.g_max,
            blocks=self.g_blocks,
            latent_dim=self.latent_dim,
        )

    def encoder_config(self, variational: bool = False) -> AppearanceEncoderConfig:
        return AppearanceEncoderConfig(
            in_channels=3 + self.buffer_channels,
            base_channels=self.e_base,
            max_channels=self.e_max,
            downsamples=self.e_downsamples,
            latent_dim=self.latent_dim,
            variational=variational,
        )

    def discriminator(self) -> MultiScaleDiscriminator:
        return MultiScaleDiscriminator(
            in_channels=self.buffer_channels + 3,
            base_channels=self.d_base,
            layers=self.d_layers,
            scales=self.d_scales,
        )


@dataclass
class StageLog:
    stage: str
    epochs: list[dict] = field(default_factory=list)

    def write_csv(self, path: Path) -> None:
        if not self.epochs:
            return
        with path.open("w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(self.epochs[0]))
            writer.writeheader()
            writer.writerows(self.epochs)


def _crop_for(cache: SampleCache, cfg: TrainConfig) -> int | None:
    if cfg.crop is None:
        return None
    height, width = cache[0].photo.shape[1:]
    if cfg.crop >= height and cfg.crop >= width:
        return None  # samples already at or below crop size
    return cfg.crop


def pretrain_appearance(
    train_cache: SampleCache,
    triplets: list[tuple[int, int, int]],
    cfg: TrainConfig,
    schedule: StageSchedule,
) -> tuple[AppearanceEncoder, StageLog]:
    """Stage 1: fit the appearance encoder on mined triplets with the
    embedding-space hinge ||E(a)-E(p)||^2 - ||E(a)-E(n)||^2 + alpha."""
    if not triplets:
        raise ValueError("empty triplet set")
    torch.manual_seed(cfg.seed)
    device = torch.device(cfg.device)
    encoder = AppearanceEncoder(cfg.encoder_config()).to(device)
    optimizer = torch.optim.Adam(encoder.parameters(), lr=schedule.lr, betas=(0.5, 0.999))
    rng = np.random.default_rng(cfg.seed)
    log = StageLog("pretrain_appearance")

    for epoch in range(schedule.epochs[0]):
        total, steps = 0.0, 0
        for batch in epoch_batches(len(triplets), cfg.batch_size, rng):
            items = [triplets[i] for i in batch]
            group = [train_cache.by_id[i] for triple in items for i in triple]
            photos = torch.stack([s.photo for s in group]).to(device)
            buffers = torch.stack([s.buffer for s in group]).to(device)
            z = encoder(photos, buffers).view(len(items), 3, -1)
            loss = embedding_triplet_loss(z[:, 0], z[:, 1], z[:, 2], schedule.alpha)
            check_finite(loss, f"stage 1 epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.detach())
            steps += 1
        log.epochs.append({"epoch": epoch, "triplet": total / max(steps, 1)})
    return encoder, log


def _adversarial_epoch(
    caches: SampleCache,
    encoder: AppearanceEncoder,
    renderer: Rerenderer,
    discriminator: MultiScaleDiscriminator,
    recon_loss: ReconstructionLoss,
    opt_g: torch.optim.Optimizer,
    opt_d: torch.optim.Optimizer,
    cfg: TrainConfig,
    schedule: StageSchedule,
    rng: np.random.Generator,
    encode_with_grad: bool,
    context: str,
) -> dict:
    device = torch.device(cfg.device)
    crop = _crop_for(caches, cfg)
    sums = {"d": 0.0, "g_gan": 0.0, "g_rec": 0.0}
    steps = 0
    for batch in epoch_batches(len(caches), cfg.batch_size, rng):
        items = [caches[i] for i in batch]
        photos, buffers, _ = caches.batch(items, crop, rng)
        photos, buffers = photos.to(device), buffers.to(device)

        if encode_with_grad:
            z = encoder(photos, buffers)
        else:
            with torch.no_grad():
                z = encoder(photos, buffers)
        fake = renderer(buffers, z)

        opt_d.zero_grad()
        d_loss = lsgan_discriminator_loss(
            discriminator(buffers, photos), discriminator(buffers, fake.detach())
        )
        check_finite(d_loss, f"{context} D step")
        d_loss.backward()
        opt_d.step()

        opt_g.zero_grad()
        g_gan = lsgan_generator_loss(discriminator(buffers, fake))
        g_rec = recon_loss(fake, photos)
        g_loss = schedule.w_gan * g_gan + schedule.w_rec * g_rec
        check_finite(g_loss, f"{context} G step")
        g_loss.backward()
        opt_g.step()

        sums["d"] += float(d_loss.detach())
        sums["g_gan"] += float(g_gan.detach())
        sums["g_rec"] += float(g_rec.detach())
        steps += 1
    return {k: v / max(steps, 1) for k, v in sums.items()}


def train_renderer(
    train_cache: SampleCache,
    encoder: AppearanceEncoder,
    cfg: TrainConfig,
    schedule: StageSchedule,
) -> tuple[Rerenderer, MultiScaleDiscriminator, StageLog]:
    """Stage 2: LSGAN + reconstruction with the encoder frozen."""
    if len(train_cache) == 0:
        raise ValueError("dataset empty after filtering")
    torch.manual_seed(cfg.seed + 1)
    device = torch.device(cfg.device)
    renderer = Rerenderer(cfg.renderer_config()).to(device)
    discriminator = cfg.discriminator().to(device)
    recon_loss = ReconstructionLoss(cfg.feature_seed, cfg.l1_weight, cfg.feature_weight).to(device)

    encoder.eval()
    encoder.requires_grad_(False)
    frozen_hash = param_hash(encoder)

    opt_g = torch.optim.Adam(renderer.parameters(), lr=schedule.lr, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(discriminator.parameters(), lr=schedule.lr, betas=(0.5, 0.999))
    rng = np.random.default_rng(cfg.seed + 1)
    log = StageLog("train_renderer")

    for epoch in range(schedule.epochs[1]):
        stats = _adversarial_epoch(
            train_cache, encoder, renderer, discriminator, recon_loss,
            opt_g, opt_d, cfg, schedule, rng,
            encode_with_grad=False, context=f"stage 2 epoch {epoch}",
        )
        log.epochs.append({"epoch": epoch, **stats})

    if param_hash(encoder) != frozen_hash:
        raise RuntimeError("appearance encoder parameters changed during stage 2")
    return renderer, discriminator, log


def finetune_joint(
    train_cache: SampleCache,
    encoder: AppearanceEncoder,
    renderer: Rerenderer,
    discriminator: MultiScaleDiscriminator,
    cfg: TrainConfig,
    schedule: StageSchedule,
) -> StageLog:
    """Stage 3: same losses with the encoder unfrozen at a reduced rate."""
    torch.manual_seed(cfg.seed + 2)
    device = torch.device(cfg.device)
    recon_loss = ReconstructionLoss(cfg.feature_seed, cfg.l1_weight, cfg.feature_weight).to(device)
    encoder.train()
    encoder.requires_grad_(True)
    lr = schedule.lr * schedule.finetune_lr_scale
    opt_g = torch.optim.Adam(
        list(renderer.parameters()) + list(encoder.parameters()), lr=lr, betas=(0.5, 0.999)
    )
    opt_d = torch.optim.Adam(discriminator.parameters(), lr=lr, betas=(0.5, 0.999))
    rng = np.random.default_rng(cfg.seed + 2)
    log = StageLog("finetune_joint")

    for epoch in range(schedule.epochs[2]):
        stats = _adversarial_epoch(
            train_cache, encoder, renderer, discriminator, recon_loss,
            opt_g, opt_d, cfg, schedule, rng,
            encode_with_grad=True, context=f"stage 3 epoch {epoch}",
        )
        log.epochs.append({"epoch": epoch, **stats})
    return log


@dataclass
class StagedResult:
    encoder: AppearanceEncoder
    renderer: Rerenderer
    discriminator: MultiScaleDiscriminator
    logs: list[StageLog]
    encoder_hash_after_stage1: str
    encoder_hash_after_stage2: str
    encoder_hash_after_stage3: str


def run_stages(
    manifest: Manifest,
    triplets: list[tuple[int, int, int]],
    cfg: TrainConfig,
    schedule: StageSchedule = StageSchedule(),
    out_dir: str | Path | None = None,
) -> StagedResult:
    """Run the three stages in order, checkpointing each."""
    train_cache = cache_for(manifest, "train")

    encoder, log1 = pretrain_appearance(train_cache, triplets, cfg, schedule)
    hash1 = param_hash(encoder)
    renderer, discriminator, log2 = train_renderer(train_cache, encoder, cfg, schedule)
    hash2 = param_hash(encoder)
    log3 = finetune_joint(train_cache, encoder, renderer, discriminator, cfg, schedule)
    hash3 = param_hash(encoder)

    result = StagedResult(encoder, renderer, discriminator, [log1, log2, log3],
                          hash1, hash2, hash3)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for stage, log in zip(STAGES, result.logs):
            log.write_csv(out_dir / f"loss_{stage}.csv")
            save_checkpoint(out_dir / f"checkpoint_{stage}.pt", encoder, renderer,
                            discriminator, cfg, schedule)
        save_sample_grid(out_dir / "samples_final.png", renderer, encoder, train_cache)
    return result


def save_checkpoint(path: Path, encoder, renderer, discriminator, cfg, schedule) -> None:
    torch.save(
        {
            "encoder": encoder.state_dict(),
            "renderer": renderer.state_dict(),
            "discriminator": discriminator.state_dict() if discriminator else None,
            "config": asdict(cfg),
            "schedule": asdict(schedule),
        },
        path,
    )


def load_checkpoint(path: str | Path) -> tuple[AppearanceEncoder, Rerenderer, TrainConfig]:
    state = torch.load(path, map_location="cpu", weights_only=False)
    raw = dict(state["config"])
    raw["transient_class_ids"] = tuple(raw.get("transient_class_ids", DEFAULT_TRANSIENT_IDS))
    cfg = TrainConfig(**raw)
    encoder = AppearanceEncoder(cfg.encoder_config())
    encoder.load_state_dict(state["encoder"])
    renderer = Rerenderer(cfg.renderer_config())
    renderer.load_state_dict(state["renderer"])
    encoder.eval()
    renderer.eval()
    return encoder, renderer, cfg


@torch.no_grad()
def save_sample_grid(path: Path, renderer: Rerenderer, encoder: AppearanceEncoder,
                     cache: SampleCache, count: int = 4) -> None:
    """Rows of (buffer albedo, rerendered, photo) for the first samples."""
    from PIL import Image

    renderer.eval()
    rows = []
    for item in cache.loaded[:count]:
        photo = item.photo[None]
        buffer = item.buffer[None]
        z = encoder.encode(photo, buffer)
        fake = renderer(buffer, z)
        row = torch.cat([buffer[0, :3], fake[0], photo[0]], dim=2)
        rows.append(row)
    grid = torch.cat(rows, dim=1)
    array = ((grid.clamp(-1, 1) + 1) * 127.5).byte().numpy().transpose(1, 2, 0)
    Image.fromarray(array, "RGB").save(path)
    renderer.train()


def train_baseline(
    manifest: Manifest,
    cfg: TrainConfig,
    schedule: StageSchedule = StageSchedule(),
    epochs: int = 15,
    out_dir: str | Path | None = None,
) -> tuple[AppearanceEncoder, Rerenderer, StageLog]:
    """Single-stage multimodal baseline with a cross-cycle consistency loss.

    A variational encoder provides z1 for image 1; the transfer R(B2, z1)
    receives the GAN loss, is re-encoded as z_hat_1 = E(R(B2, z1), B2) and
    must reconstruct image 1 through R(B1, z_hat_1). Direct reconstruction,
    KL prior, and latent reconstruction terms complete the objective.
    """
    if cfg.batch_size < 2:
        raise ValueError("cross-cycle pairs need batch_size >= 2")
    torch.manual_seed(cfg.seed + 3)
    device = torch.device(cfg.device)
    train_cache = cache_for(manifest, "train")
    encoder = AppearanceEncoder(cfg.encoder_config(variational=True)).to(device)
    renderer = Rerenderer(cfg.renderer_config()).to(device)
    discriminator = cfg.discriminator().to(device)
    recon_loss = ReconstructionLoss(cfg.feature_seed, cfg.l1_weight, cfg.feature_weight).to(device)

    opt_g = torch.optim.Adam(
        list(renderer.parameters()) + list(encoder.parameters()),
        lr=schedule.lr, betas=(0.5, 0.999),
    )
    opt_d = torch.optim.Adam(discriminator.parameters(), lr=schedule.lr, betas=(0.5, 0.999))
    rng = np.random.default_rng(cfg.seed + 3)
    crop = _crop_for(train_cache, cfg)
    log = StageLog("baseline")

    for epoch in range(epochs):
        sums = {"d": 0.0, "g_gan": 0.0, "direct": 0.0, "cross": 0.0, "kl": 0.0, "latent": 0.0}
        steps = 0
        for batch in epoch_batches(len(train_cache), cfg.batch_size, rng):
            if len(batch) < 2:
                continue
            items = [train_cache[i] for i in batch]
            photos, buffers, _ = train_cache.batch(items, crop, rng)
            photos, buffers = photos.to(device), buffers.to(device)
            photos2 = photos.roll(1, dims=0)
            buffers2 = buffers.roll(1, dims=0)

            mu, logvar = encoder(photos, buffers)
            z1 = mu + torch.randn_like(mu) * (0.5 * logvar).exp()
            transfer = renderer(buffers2, z1)

            opt_d.zero_grad()
            d_loss = lsgan_discriminator_loss(
                discriminator(buffers2, photos2), discriminator(buffers2, transfer.detach())
            )
            check_finite(d_loss, f"baseline epoch {epoch} D")
            d_loss.backward()
            opt_d.step()

            opt_g.zero_grad()
            g_gan = lsgan_generator_loss(discriminator(buffers2, transfer))
            direct = recon_loss(renderer(buffers, z1), photos)
            z_hat = encoder(transfer, buffers2)[0]
            cross = recon_loss(renderer(buffers, z_hat), photos)
            kl = kl_divergence(mu, logvar)
            z_random = torch.randn_like(mu)
            z_recovered = encoder(renderer(buffers2, z_random), buffers2)[0]
            latent = torch.nn.functional.l1_loss(z_recovered, z_random)
            g_loss = (
                schedule.w_gan * g_gan
                + schedule.w_rec * direct
                + cfg.w_cross * cross
                + cfg.w_kl * kl
                + cfg.w_latent * latent
            )
            check_finite(g_loss, f"baseline epoch {epoch} G")
            g_loss.backward()
            opt_g.step()

            for key, value in (("d", d_loss), ("g_gan", g_gan), ("direct", direct),
                               ("cross", cross), ("kl", kl), ("latent", latent)):
                sums[key] += float(value.detach())
            steps += 1
        log.epochs.append({"epoch": epoch, **{k: v / max(steps, 1) for k, v in sums.items()}})

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log.write_csv(out_dir / "loss_baseline.csv")
        save_checkpoint(out_dir / "checkpoint_baseline.pt", encoder, renderer,
                        discriminator, cfg, schedule)
    return encoder, renderer, log


def train_semantic_predictor(
    manifest: Manifest,
    cfg: TrainConfig,
    schedule: StageSchedule = StageSchedule(),
    epochs: int = 10,
    out_dir: str | Path | None = None,
) -> tuple[Rerenderer, StageLog]:
    """Per-pixel classification of the label map from the geometry channels
    of the deep buffer; loss is zeroed on transient and unlabeled pixels."""
    torch.manual_seed(cfg.seed + 4)
    device = torch.device(cfg.device)
    train_cache = cache_for(manifest, "train")
    net = semantic_predictor(
        num_classes=cfg.num_classes,
        in_channels=GEOMETRY_CHANNELS,
        base_channels=cfg.g_base,
        max_channels=cfg.g_max,
        blocks=cfg.g_blocks,
    ).to(device)
    optimizer = torch.optim.Adam(net.parameters(), lr=schedule.lr, betas=(0.5, 0.999))
    rng = np.random.default_rng(cfg.seed + 4)
    crop = _crop_for(train_cache, cfg)
    transient = torch.tensor(sorted(cfg.transient_class_ids))
    log = StageLog("semantic")

    for epoch in range(epochs):
        total, steps = 0.0, 0
        for batch in epoch_batches(len(train_cache), cfg.batch_size, rng):
            items = [train_cache[i] for i in batch]
            _, buffers, labels = train_cache.batch(items, crop, rng)
            buffers, labels = buffers.to(device), labels.to(device)
            logits = net(buffers[:, :GEOMETRY_CHANNELS])
            loss = masked_label_loss(logits, labels, transient)
            check_finite(loss, f"semantic epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.detach())
            steps += 1
        log.epochs.append({"epoch": epoch, "ce": total / max(steps, 1)})

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log.write_csv(out_dir / "loss_semantic.csv")
        torch.save({"semantic": net.state_dict(), "config": asdict(cfg)},
                   out_dir / "checkpoint_semantic.pt")
    return net, log


def masked_label_loss(logits: torch.Tensor, labels: torch.Tensor,
                      transient_ids: torch.Tensor) -> torch.Tensor:
    """Cross entropy with transient and unlabeled pixels excluded; an
    all-masked batch contributes exactly zero."""
    target = labels.clone()
    target[torch.isin(target, transient_ids.to(target.device))] = 255
    ce = torch.nn.functional.cross_entropy(
        logits, target, ignore_index=255, reduction="none"
    )
    valid = (target != 255).sum()
    if int(valid) == 0:
        return logits.sum() * 0.0
    return ce.sum() / valid
