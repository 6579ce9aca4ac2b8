"""Unsupervised salient-object video segmentation.

Per-frame soft masks come from the second eigenvector of an appearance+flow
affinity matrix; all masks are then refined jointly under a flow-consistency
cross-entropy objective. The engine operates on precomputed feature and flow
files (VSEG1 containers) and validates itself against a dense full-video
spectral oracle.
"""

from .affinity import (
    AffinityConfig,
    AffinityMatrix,
    InitMask,
    cosine_similarity,
    frame_affinity,
    row_normalize,
    second_eigenvector,
)
from .flowops import (
    WarpOperator,
    apply_warp,
    apply_warp_adjoint,
    build_horizon_warps,
    build_warp,
    compose_flow,
    flow_reliability,
    resample_flow,
)
from .objective import (
    ObjectiveConfig,
    RefinementResult,
    SoftMask,
    masked_cross_entropy,
    normalize_init,
    refine_masks,
    video_objective,
)
from .pipeline import VideoObjectSegmenter, check_bundle
from .segmentation import MetricReport, binarize, contour_f, jaccard
from .synthetic import OracleReport, SceneSpec, full_affinity, generate, oracle_segment
from .tensorio import (
    TensorFormatError,
    VideoBundle,
    load_bundle,
    read_gt_mask,
    read_mask_image,
    read_tensor,
    save_bundle,
    write_mask_image,
    write_tensor,
)

__version__ = "0.1.0"

__all__ = [
    "AffinityConfig",
    "AffinityMatrix",
    "InitMask",
    "MetricReport",
    "ObjectiveConfig",
    "OracleReport",
    "RefinementResult",
    "SceneSpec",
    "SoftMask",
    "TensorFormatError",
    "VideoBundle",
    "VideoObjectSegmenter",
    "apply_warp",
    "apply_warp_adjoint",
    "binarize",
    "build_horizon_warps",
    "build_warp",
    "check_bundle",
    "compose_flow",
    "contour_f",
    "cosine_similarity",
    "flow_reliability",
    "frame_affinity",
    "full_affinity",
    "generate",
    "jaccard",
    "load_bundle",
    "masked_cross_entropy",
    "normalize_init",
    "oracle_segment",
    "read_gt_mask",
    "read_mask_image",
    "read_tensor",
    "refine_masks",
    "resample_flow",
    "row_normalize",
    "save_bundle",
    "second_eigenvector",
    "video_objective",
    "write_mask_image",
    "write_tensor",
    "WarpOperator",
]
