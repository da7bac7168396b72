"""FROC analysis: sensitivity against false positives per image (FPPI)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

from .errors import DomainError
from .geometry import BBox, boxes_to_array, iou_matrix

DEFAULT_FPPI = (0.5, 1.0, 2.0, 3.0, 4.0)
DEFAULT_MATCH_IOU = 0.5


@dataclass(frozen=True)
class DetectionRecord:
    image_id: Hashable
    box: BBox
    score: float

    def __post_init__(self) -> None:
        s = float(self.score)
        if not math.isfinite(s) or not 0.0 <= s <= 1.0:
            raise ValueError(f"score must be finite and in [0, 1], got {self.score}")
        object.__setattr__(self, "score", s)


@dataclass(frozen=True)
class FrocPoint:
    threshold: float
    fppi: float
    sensitivity: float


@dataclass(frozen=True)
class FrocCurve:
    """Operating points ordered by decreasing score threshold (increasing FPPI)."""

    points: tuple[FrocPoint, ...]
    n_images: int
    n_gts: int

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def score_order(scores: Sequence[float]) -> np.ndarray:
    """Indices by descending score; ties keep input order."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def match_detections(
    dets: Sequence[DetectionRecord], gts: Sequence[BBox], iou_thresh: float = DEFAULT_MATCH_IOU
) -> list[bool]:
    """Greedy TP/FP flags for one image, aligned with the input order of ``dets``.

    Detections are visited by descending score; each claims the unmatched GT
    with the highest IoU (lowest index on ties) if that IoU reaches
    ``iou_thresh``. Every GT is matched at most once.
    """
    flags = [False] * len(dets)
    if not dets or not gts:
        return flags
    overlaps = iou_matrix(boxes_to_array(d.box for d in dets), boxes_to_array(gts))
    taken = np.zeros(len(gts), dtype=bool)
    for i in score_order([d.score for d in dets]):
        row = np.where(taken, -1.0, overlaps[i])
        j = int(np.argmax(row))
        if row[j] >= iou_thresh and not taken[j]:
            taken[j] = True
            flags[i] = True
    return flags


def froc_curve(
    images: Mapping[Hashable, tuple[Sequence[DetectionRecord], Sequence[BBox]]],
    iou_thresh: float = DEFAULT_MATCH_IOU,
) -> FrocCurve:
    """FROC curve over ``{image_id: (detections, gt_boxes)}``.

    Matching runs once per image with all detections; because greedy matching
    visits detections in score order, thresholding the flags afterwards gives
    the same result as re-matching at every threshold. One point is emitted
    per distinct score, counting detections with ``score >= threshold``.
    """
    if not images:
        raise DomainError("FROC needs at least one image")
    n_images = len(images)
    n_gts = sum(len(gts) for _, gts in images.values())
    if n_gts == 0:
        raise DomainError("FROC needs at least one ground-truth box")

    scores: list[float] = []
    tps: list[bool] = []
    for dets, gts in images.values():
        scores.extend(d.score for d in dets)
        tps.extend(match_detections(dets, gts, iou_thresh))
    if not scores:
        return FrocCurve((), n_images, n_gts)

    s = np.asarray(scores)
    tp = np.asarray(tps, dtype=bool)
    order = np.argsort(-s, kind="stable")
    s, tp = s[order], tp[order]
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(~tp)
    # last index of each run of equal scores
    ends = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    points = tuple(
        FrocPoint(float(s[e]), float(cum_fp[e]) / n_images, float(cum_tp[e]) / n_gts) for e in ends
    )
    return FrocCurve(points, n_images, n_gts)


def sensitivity_at_fppi(curve: FrocCurve, targets: Sequence[float] = DEFAULT_FPPI) -> list[float]:
    """Best sensitivity reachable without exceeding each FPPI target (step rule, 0 if none)."""
    out = []
    for t in targets:
        if not t > 0:
            raise ValueError(f"FPPI targets must be positive, got {t}")
        eligible = [p.sensitivity for p in curve.points if p.fppi <= t]
        out.append(max(eligible) if eligible else 0.0)
    return out
