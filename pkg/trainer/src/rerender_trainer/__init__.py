"""Toy-scale neural rerendering trainer.

Consumes the data toolkit's files (manifest, NRDB deep buffers, triplet
lists) and trains the staged appearance model, the cross-cycle baseline,
and the semantic prediction network.
"""

from .data import SampleCache, cache_for, load_buffer, load_photo
from .formats import (
    Manifest,
    Sample,
    read_embeddings,
    read_manifest,
    read_nrdb,
    read_palette,
    read_triplets,
    write_embeddings,
)
from .inference import (
    mean_luminance,
    pad_to_multiple,
    render_path,
    rerender,
    transfer_appearance,
)
from .losses import (
    FeatureBank,
    ReconstructionLoss,
    embedding_triplet_loss,
    kl_divergence,
    lsgan_discriminator_loss,
    lsgan_generator_loss,
)
from .nets import (
    AppearanceEncoder,
    AppearanceEncoderConfig,
    MultiScaleDiscriminator,
    PixelNorm,
    Rerenderer,
    RerendererConfig,
    interpolate_embeddings,
    param_hash,
    pixel_norm,
    semantic_predictor,
)
from .stages import (
    StagedResult,
    StageSchedule,
    TrainConfig,
    finetune_joint,
    load_checkpoint,
    masked_label_loss,
    pretrain_appearance,
    run_stages,
    train_baseline,
    train_renderer,
    train_semantic_predictor,
)
from .toyscene import read_modes, write_toy_scene

__version__ = "0.1.0"
