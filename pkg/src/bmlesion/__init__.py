"""Bounding-map targets, graded anchor labels, losses and FROC evaluation for lesion detection."""

from .errors import (
    BMError,
    ConfigError,
    DegenerateInputError,
    DimensionError,
    DomainError,
    FormatError,
    ParseError,
)
from .evaluation import DetectionRecord, FrocCurve, froc_curve, match_detections, sensitivity_at_fppi
from .geometry import (
    AnchorGridSpec,
    AnchorSet,
    BBox,
    box_delta_decode,
    box_delta_encode,
    generate_anchors,
    iou,
    iou_matrix,
)
from .labels import AnchorLabelVector, ThresholdConfig, assign_labels, sample_minibatch
from .losses import (
    AnchorTerms,
    LossReport,
    RoiTerms,
    anchor_cls_loss,
    bm_branch_loss,
    finite_diff_check,
    full_loss,
    smooth_l1_reg_loss,
)
from .maps import (
    MapGrid,
    bm_gaussian_single,
    bm_x_single,
    bm_xy,
    bm_y_single,
    build_targets,
    combine_maps,
    inside_box_mask,
)
from .resampling import concat_channels, resize_bilinear, roi_crop_resize, stride_downsample
from .windowing import apply_window

__version__ = "0.1.0"

__all__ = [
    "BMError",
    "ConfigError",
    "DegenerateInputError",
    "DimensionError",
    "DomainError",
    "FormatError",
    "ParseError",
    "DetectionRecord",
    "FrocCurve",
    "froc_curve",
    "match_detections",
    "sensitivity_at_fppi",
    "AnchorGridSpec",
    "AnchorSet",
    "BBox",
    "box_delta_decode",
    "box_delta_encode",
    "generate_anchors",
    "iou",
    "iou_matrix",
    "AnchorLabelVector",
    "ThresholdConfig",
    "assign_labels",
    "sample_minibatch",
    "AnchorTerms",
    "LossReport",
    "RoiTerms",
    "anchor_cls_loss",
    "bm_branch_loss",
    "finite_diff_check",
    "full_loss",
    "smooth_l1_reg_loss",
    "MapGrid",
    "bm_gaussian_single",
    "bm_x_single",
    "bm_xy",
    "bm_y_single",
    "build_targets",
    "combine_maps",
    "inside_box_mask",
    "concat_channels",
    "resize_bilinear",
    "roi_crop_resize",
    "stride_downsample",
    "apply_window",
]
