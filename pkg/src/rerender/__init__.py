"""Scene rerendering toolkit.

Turns an SfM/MVS reconstruction plus a photo collection into aligned
deep-buffer datasets, mines style-based triplets for appearance-embedding
pretraining, and reports reconstruction quality metrics.
"""

from .camera import Projection, Viewpoint, project, quat_to_matrix, scale_to_min_dim
from .dataset import (
    AlignedSample,
    BuildConfig,
    Manifest,
    build_dataset,
    read_manifest,
    split_validation,
    viewpoint_from_dict,
)
from .io_colmap import (
    INVALID_POINT3D_ID,
    Camera,
    CameraModel,
    DanglingReferenceError,
    DuplicateIdError,
    Point3D,
    Reconstruction,
    ReconstructionError,
    RegisteredImage,
    TruncatedStreamError,
    UnknownCameraModelError,
    parse_reconstruction,
    serialize_reconstruction,
)
from .labels import (
    DEFAULT_TRANSIENT_CLASSES,
    LabelError,
    Palette,
    decode_labels,
    encode_labels,
    load_label_map,
    load_palette,
    transient_mask,
)
from .quality import (
    FilterbankExtractor,
    MetricReport,
    compute_report,
    l1,
    load_image,
    perceptual,
    psnr,
)
from .report import write_report
from .splat import (
    DeepBuffer,
    PointCloudView,
    empty_fraction,
    footprint_offsets,
    read_nrdb,
    render,
    write_nrdb,
)
from .style import (
    TripletConfig,
    TripletSet,
    distance_matrix,
    filterbank_features,
    gram,
    gram_set,
    mine_triplets,
    neighbor_pools,
    read_nrft,
    style_distance,
    triplet_loss,
    write_nrft,
)

__version__ = "0.1.0"
