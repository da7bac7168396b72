"""Graded anchor labels and minibatch sampling.

Anchors whose best IoU with any ground truth reaches ``iou_max`` take their
label from the stride-resolution ``BM_xy`` map at their centre cell, so
positives are graded in ``[0, 1]`` instead of being a flat 1. Anchors at or
below ``iou_min`` are negatives (0) and anything strictly between the two
thresholds is dropped out (-1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError
from .geometry import AnchorSet, BBox, boxes_to_array, iou_matrix
from .maps import MapGrid

DROPOUT = -1.0


@dataclass(frozen=True)
class ThresholdConfig:
    iou_min: float = 0.3
    iou_max: float = 0.5
    force_positive: bool = False

    def __post_init__(self) -> None:
        if not (0.0 <= self.iou_min < self.iou_max <= 1.0):
            raise ValueError(
                f"thresholds must satisfy 0 <= iou_min < iou_max <= 1, got {self.iou_min}, {self.iou_max}"
            )


@dataclass(frozen=True, eq=False)
class AnchorLabelVector:
    """Per-anchor labels together with the IoU that produced them.

    ``positive`` marks anchors in the graded branch (their label is a map
    lookup and may itself be 0 for a large anchor whose centre cell falls
    outside every box).
    """

    labels: np.ndarray
    ious: np.ndarray
    positive: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dropout(self) -> np.ndarray:
        return self.labels == DROPOUT

    @property
    def negative(self) -> np.ndarray:
        return ~self.positive & ~self.dropout

    @property
    def trained(self) -> np.ndarray:
        return ~self.dropout

    def counts(self) -> dict[str, int]:
        return {
            "positive": int(self.positive.sum()),
            "negative": int(self.negative.sum()),
            "dropout": int(self.dropout.sum()),
        }


def assign_labels(
    anchors: AnchorSet,
    gts: Sequence[BBox],
    bm_r_xy: MapGrid,
    cfg: ThresholdConfig = ThresholdConfig(),
) -> AnchorLabelVector:
    """Label every anchor from its max IoU and the downsampled ``BM_xy``."""
    if (bm_r_xy.width, bm_r_xy.height) != (anchors.grid_w, anchors.grid_h) or bm_r_xy.channels != 1:
        raise DimensionError(
            f"label map is {bm_r_xy.width}x{bm_r_xy.height}x{bm_r_xy.channels}, "
            f"anchor grid is {anchors.grid_w}x{anchors.grid_h}x1"
        )
    n = len(anchors)
    gts = list(gts)
    if not gts:
        return AnchorLabelVector(np.zeros(n), np.zeros(n), np.zeros(n, dtype=bool))

    overlaps = iou_matrix(anchors.boxes, boxes_to_array(gts))
    ious = overlaps.max(axis=1)
    positive = ious >= cfg.iou_max
    if cfg.force_positive:
        # standard RPN rule: best anchor(s) of each GT become positive
        best = overlaps.max(axis=0)
        forced = np.any((overlaps == best[None, :]) & (best[None, :] > 0.0), axis=1)
        positive = positive | forced
    negative = ~positive & (ious <= cfg.iou_min)

    labels = np.full(n, DROPOUT)
    labels[negative] = 0.0
    gx, gy = anchors.centers[:, 0], anchors.centers[:, 1]
    labels[positive] = bm_r_xy.values[0, gy[positive], gx[positive]]
    return AnchorLabelVector(labels=labels, ious=ious, positive=positive)


def sample_minibatch(
    labels: AnchorLabelVector | np.ndarray,
    max_total: int = 256,
    positive_fraction: float = 0.5,
    seed: int = 0,
) -> np.ndarray:
    """Seeded RPN-style minibatch of anchor indices.

    Positives (label > 0) are capped at ``positive_fraction * max_total``; the
    rest is filled with negatives (label == 0). Drop-out anchors are never
    chosen. Returned indices are positives then negatives, each ascending.
    """
    if max_total < 1:
        raise ValueError(f"max_total must be >= 1, got {max_total}")
    if not 0.0 < positive_fraction < 1.0:
        raise ValueError(f"positive_fraction must be in (0, 1), got {positive_fraction}")
    values = labels.labels if isinstance(labels, AnchorLabelVector) else np.asarray(labels, dtype=np.float64)
    rng = np.random.default_rng(seed)
    pos = np.flatnonzero(values > 0.0)
    neg = np.flatnonzero(values == 0.0)

    n_pos = min(len(pos), int(positive_fraction * max_total))
    if n_pos < len(pos):
        pos = np.sort(rng.choice(pos, size=n_pos, replace=False))
    n_neg = min(len(neg), max_total - n_pos)
    if n_neg < len(neg):
        neg = np.sort(rng.choice(neg, size=n_neg, replace=False))
    return np.concatenate([pos, neg]).astype(np.int64)
