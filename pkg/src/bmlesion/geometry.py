"""Boxes, IoU, anchor tiling and box-delta encoding.

Boxes use continuous pixel coordinates ``(x1, y1, x2, y2)`` with area
``(x2 - x1) * (y2 - y1)``. No ``+1`` inclusive-pixel correction is applied
here; the integer rasterization used for bounding maps lives in
:mod:`bmlesion.maps`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class BBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite, got {coords}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"box must satisfy x1 < x2 and y1 < y2, got {coords}")
        # normalise numpy scalars so equality and hashing behave
        for name, c in zip(("x1", "y1", "x2", "y2"), coords):
            object.__setattr__(self, name, float(c))

    @classmethod
    def from_seq(cls, seq: Sequence[float]) -> BBox:
        if len(seq) != 4:
            raise ValueError(f"expected 4 coordinates, got {len(seq)}")
        return cls(*(float(v) for v in seq))

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=np.float64)

    def transpose(self) -> BBox:
        """Swap the x and y axes."""
        return BBox(self.y1, self.x1, self.y2, self.x2)


def boxes_to_array(boxes: Iterable[BBox]) -> np.ndarray:
    arr = np.array([b.as_tuple() for b in boxes], dtype=np.float64)
    return arr.reshape(-1, 4)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes, in ``[0, 1]``."""
    if a == b:
        return 1.0
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return min(1.0, inter / union)


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between ``(N, 4)`` and ``(K, 4)`` box arrays -> ``(N, K)``."""
    boxes_a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    boxes_b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    if len(boxes_a) == 0 or len(boxes_b) == 0:
        return np.zeros((len(boxes_a), len(boxes_b)))
    a = boxes_a[:, None, :]
    b = boxes_b[None, :, :]
    iw = np.clip(np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0]), 0.0, None)
    ih = np.clip(np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1]), 0.0, None)
    inter = iw * ih
    area_a = (boxes_a[:, 2] - boxes_a[:, 0]) * (boxes_a[:, 3] - boxes_a[:, 1])
    area_b = (boxes_b[:, 2] - boxes_b[:, 0]) * (boxes_b[:, 3] - boxes_b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.minimum(inter / union, 1.0)
    # identical boxes give exactly 1 regardless of rounding
    same = np.all(a == b, axis=-1)
    out[same] = 1.0
    return out


@dataclass(frozen=True)
class AnchorGridSpec:
    """Anchor tiling parameters.

    The defaults (stride 8, scales 32/64/128, ratios 0.5/1/2) are common RPN
    conventions, not values taken from the lesion-detection literature.
    ``ratios`` are height / width.
    """

    stride: int = 8
    scales: tuple[float, ...] = (32.0, 64.0, 128.0)
    ratios: tuple[float, ...] = (0.5, 1.0, 2.0)

    def __post_init__(self) -> None:
        if int(self.stride) != self.stride or self.stride < 1:
            raise ValueError(f"stride must be a positive integer, got {self.stride}")
        object.__setattr__(self, "stride", int(self.stride))
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        if not self.scales or not self.ratios:
            raise ValueError("scales and ratios must be non-empty")
        if any(not (s > 0 and math.isfinite(s)) for s in self.scales):
            raise ValueError(f"scales must be positive, got {self.scales}")
        if any(not (r > 0 and math.isfinite(r)) for r in self.ratios):
            raise ValueError(f"ratios must be positive, got {self.ratios}")

    @property
    def per_cell(self) -> int:
        return len(self.scales) * len(self.ratios)

    def grid_shape(self, image_w: int, image_h: int) -> tuple[int, int]:
        """Return ``(grid_w, grid_h)``; raises if the image is not stride-aligned."""
        if image_w < 1 or image_h < 1:
            raise DimensionError(f"image size must be positive, got {image_w}x{image_h}")
        if image_w % self.stride or image_h % self.stride:
            raise DimensionError(
                f"image size {image_w}x{image_h} is not divisible by stride {self.stride}; "
                "pad the image first"
            )
        return image_w // self.stride, image_h // self.stride


@dataclass(frozen=True)
class AnchorSet:
    """Anchors tiled on a stride grid.

    ``boxes`` is ``(N, 4)``; ``centers`` holds the ``(grid_x, grid_y)`` cell of
    each anchor, and ``scale_idx`` / ``ratio_idx`` index into its scales and ratios.
    """

    boxes: np.ndarray
    centers: np.ndarray
    scale_idx: np.ndarray
    ratio_idx: np.ndarray
    grid_w: int
    grid_h: int
    stride: int = field(default=1)

    def __post_init__(self) -> None:
        n = len(self.boxes)
        if not (len(self.centers) == len(self.scale_idx) == len(self.ratio_idx) == n):
            raise DimensionError("anchor arrays must share the same length")
        if n:
            gx, gy = self.centers[:, 0], self.centers[:, 1]
            if gx.min() < 0 or gy.min() < 0 or gx.max() >= self.grid_w or gy.max() >= self.grid_h:
                raise DimensionError("anchor center index outside the grid")

    def __len__(self) -> int:
        return len(self.boxes)

    def box(self, i: int) -> BBox:
        return BBox.from_seq(self.boxes[i])


def generate_anchors(spec: AnchorGridSpec, image_w: int, image_h: int) -> AnchorSet:
    """Tile anchors over the image, one per grid cell, scale and ratio.

    Order is grid-y major, then grid-x, then scale, then ratio. Anchors are
    centred at ``((gx + 0.5) * R, (gy + 0.5) * R)`` and are not clipped to the
    image.
    """
    grid_w, grid_h = spec.grid_shape(image_w, image_h)
    r = spec.stride
    scales = np.asarray(spec.scales)
    ratios = np.asarray(spec.ratios)
    # (S, Rt) base shapes
    widths = scales[:, None] / np.sqrt(ratios)[None, :]
    heights = scales[:, None] * np.sqrt(ratios)[None, :]

    gy, gx, si, ri = np.meshgrid(
        np.arange(grid_h), np.arange(grid_w), np.arange(len(scales)), np.arange(len(ratios)),
        indexing="ij",
    )
    gy, gx, si, ri = (a.ravel() for a in (gy, gx, si, ri))
    cx = (gx + 0.5) * r
    cy = (gy + 0.5) * r
    w = widths[si, ri]
    h = heights[si, ri]
    boxes = np.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], axis=1)
    centers = np.stack([gx, gy], axis=1).astype(np.int64)
    return AnchorSet(
        boxes=boxes,
        centers=centers,
        scale_idx=si.astype(np.int64),
        ratio_idx=ri.astype(np.int64),
        grid_w=grid_w,
        grid_h=grid_h,
        stride=r,
    )


def _centers_sizes(boxes: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    w = boxes[..., 2] - boxes[..., 0]
    h = boxes[..., 3] - boxes[..., 1]
    return boxes[..., 0] + 0.5 * w, boxes[..., 1] + 0.5 * h, w, h


def encode_deltas(anchors: np.ndarray, gts: np.ndarray) -> np.ndarray:
    """Vectorised :func:`box_delta_encode` over ``(..., 4)`` arrays."""
    anchors = np.asarray(anchors, dtype=np.float64)
    gts = np.asarray(gts, dtype=np.float64)
    ax, ay, aw, ah = _centers_sizes(anchors)
    gx, gy, gw, gh = _centers_sizes(gts)
    return np.stack([(gx - ax) / aw, (gy - ay) / ah, np.log(gw / aw), np.log(gh / ah)], axis=-1)


def decode_deltas(deltas: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Vectorised :func:`box_delta_decode` over ``(..., 4)`` arrays."""
    deltas = np.asarray(deltas, dtype=np.float64)
    anchors = np.asarray(anchors, dtype=np.float64)
    ax, ay, aw, ah = _centers_sizes(anchors)
    cx = ax + deltas[..., 0] * aw
    cy = ay + deltas[..., 1] * ah
    w = aw * np.exp(deltas[..., 2])
    h = ah * np.exp(deltas[..., 3])
    return np.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], axis=-1)


def box_delta_encode(anchor: BBox, gt: BBox) -> tuple[float, float, float, float]:
    """Regression target ``(tx, ty, tw, th)`` taking ``anchor`` onto ``gt``."""
    return tuple(float(v) for v in encode_deltas(anchor.as_array(), gt.as_array()))  # type: ignore[return-value]


def box_delta_decode(delta: Sequence[float], anchor: BBox) -> BBox:
    d = np.asarray(delta, dtype=np.float64)
    if d.shape != (4,) or not np.all(np.isfinite(d)):
        raise ValueError(f"delta must be 4 finite values, got {delta!r}")
    return BBox.from_seq(decode_deltas(d, anchor.as_array()))
