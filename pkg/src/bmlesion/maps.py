"""Bounding-map generation.

A ground-truth box is turned into three soft maps: ``BM_x`` and ``BM_y`` fall
linearly from 1 on the box's centre line to 0.5 on its border along one axis,
and ``BM_xy`` is the geometric mean of the two. Maps from several boxes are
summed and clamped at 1.

Cells are addressed by integer lattice coordinates ``(x, y)`` and a cell is
inside a box when ``x1 <= x <= x2`` and ``y1 <= y <= y2`` (inclusive bounds).
Box coordinates may be fractional and are compared directly against the
lattice.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import DimensionError
from .geometry import BBox

logger = logging.getLogger(__name__)

Variant = Literal["linear", "gaussian"]
VARIANTS: tuple[str, ...] = ("linear", "gaussian")


@dataclass(frozen=True, eq=False)
class MapGrid:
    """A ``channels x height x width`` grid of values.

    ``values[c, y, x]`` is the value of cell ``(x, y)`` in channel ``c``; the
    flat layout is channel-major then row-major.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values)
        if v.ndim == 2:
            v = v[None]
        if v.ndim != 3 or min(v.shape) < 1:
            raise DimensionError(f"map values must be (C, H, W) with positive sizes, got {v.shape}")
        if v.dtype != np.bool_ and not np.all(np.isfinite(v)):
            raise ValueError("map values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, width: int, height: int, channels: int = 1) -> MapGrid:
        return cls(np.zeros((channels, height, width)))

    @classmethod
    def bm(cls, values: np.ndarray) -> MapGrid:
        """Build a bounding-map grid, enforcing the ``[0, 1]`` value range."""
        grid = cls(np.asarray(values, dtype=np.float64))
        if grid.values.min() < 0.0 or grid.values.max() > 1.0:
            raise ValueError("bounding-map values must lie in [0, 1]")
        return grid

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape  # type: ignore[return-value]

    def at(self, x: int, y: int, channel: int = 0) -> float:
        return self.values[channel, y, x].item()

    def channel(self, c: int) -> MapGrid:
        return MapGrid(self.values[c : c + 1])

    def transpose(self) -> MapGrid:
        """Swap the x and y axes of every channel."""
        return MapGrid(np.ascontiguousarray(self.values.transpose(0, 2, 1)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MapGrid):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.values, other.values))


def _lattice(w: int, h: int) -> tuple[np.ndarray, np.ndarray]:
    if w < 1 or h < 1:
        raise DimensionError(f"grid size must be positive, got {w}x{h}")
    xs = np.arange(w, dtype=np.float64)[None, :]
    ys = np.arange(h, dtype=np.float64)[:, None]
    return xs, ys


def _inside(box: BBox, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    return (xs >= box.x1) & (xs <= box.x2) & (ys >= box.y1) & (ys <= box.y2)


def inside_box_mask(box: BBox, w: int, h: int) -> MapGrid:
    """Boolean grid of lattice cells covered by ``box`` (inclusive bounds)."""
    xs, ys = _lattice(w, h)
    mask = _inside(box, xs, ys)
    if not mask.any():
        logger.warning("box %s covers no cell of the %dx%d lattice", box.as_tuple(), w, h)
    return MapGrid(mask[None])


def _linear_profile(d: np.ndarray, lo: float, hi: float) -> np.ndarray:
    # 1 - k |d - ctr| with k = 1 / extent; division keeps border values exact
    ctr = (lo + hi) / 2.0
    return 1.0 - np.abs(d - ctr) / (hi - lo)


def _gaussian_profile(d: np.ndarray, lo: float, hi: float) -> np.ndarray:
    # sigma = (extent / 2) / sqrt(2 ln 2)  <=>  value = 2 ** -((d - ctr) / half)^2
    ctr = (lo + hi) / 2.0
    t = (d - ctr) / ((hi - lo) / 2.0)
    return np.exp2(-(t * t))


def _single(box: BBox, w: int, h: int, axis: str, profile) -> MapGrid:
    xs, ys = _lattice(w, h)
    mask = _inside(box, xs, ys)
    if axis == "x":
        line = profile(xs, box.x1, box.x2)
    elif axis == "y":
        line = profile(ys, box.y1, box.y2)
    else:
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    values = np.where(mask, np.broadcast_to(line, mask.shape), 0.0)
    return MapGrid(values[None])


def bm_x_single(box: BBox, w: int, h: int) -> MapGrid:
    """x-direction bounding map of one box on a ``w x h`` lattice.

    Inside the box the value is ``1 - |x - x_ctr| / (x2 - x1)``, so it is 1 on
    the centre column and 0.5 on the left/right borders. When the box width is
    an odd integer no lattice column sits on the centre and the two nearest
    columns share the maximum ``1 - 1 / (2 (x2 - x1))``.
    """
    return _single(box, w, h, "x", _linear_profile)


def bm_y_single(box: BBox, w: int, h: int) -> MapGrid:
    """y-direction counterpart of :func:`bm_x_single`."""
    return _single(box, w, h, "y", _linear_profile)


def bm_gaussian_single(box: BBox, w: int, h: int, axis: str) -> MapGrid:
    """Gaussian ablation variant along ``axis`` ('x' or 'y').

    A Gaussian truncated to the box with its width chosen so the border value
    is 0.5, matching the linear maps at the centre line and the border.
    """
    return _single(box, w, h, axis, _gaussian_profile)


def _check_same_single(maps: Sequence[MapGrid]) -> None:
    shape = maps[0].shape
    for m in maps:
        if m.channels != 1:
            raise DimensionError(f"expected single-channel maps, got {m.channels} channels")
        if m.shape != shape:
            raise DimensionError(f"map shapes differ: {m.shape} vs {shape}")


def combine_maps(maps: Sequence[MapGrid]) -> MapGrid:
    """Cellwise ``min(sum(maps), 1)``."""
    maps = list(maps)
    if not maps:
        raise DimensionError("combine_maps needs at least one map")
    _check_same_single(maps)
    total = np.zeros(maps[0].shape)
    for m in maps:
        total = total + m.values
    return MapGrid(np.minimum(total, 1.0))


def bm_xy(bmx: MapGrid, bmy: MapGrid) -> MapGrid:
    """Cellwise geometric mean ``sqrt(bmx * bmy)``."""
    _check_same_single([bmx, bmy])
    if min(bmx.values.min(), bmy.values.min()) < 0.0 or max(bmx.values.max(), bmy.values.max()) > 1.0:
        raise ValueError("bm_xy inputs must lie in [0, 1]")
    return MapGrid(np.sqrt(bmx.values * bmy.values))


def build_targets(
    boxes: Sequence[BBox], w: int, h: int, variant: Variant = "linear"
) -> tuple[MapGrid, MapGrid, MapGrid]:
    """Return ``(BM_x, BM_y, BM_xy)`` for all ground-truth boxes of one image."""
    boxes = list(boxes)
    if not boxes:
        raise DimensionError("build_targets needs at least one box")
    if variant == "linear":
        xs = [bm_x_single(b, w, h) for b in boxes]
        ys = [bm_y_single(b, w, h) for b in boxes]
    elif variant == "gaussian":
        xs = [bm_gaussian_single(b, w, h, "x") for b in boxes]
        ys = [bm_gaussian_single(b, w, h, "y") for b in boxes]
    else:
        raise ValueError(f"unknown bounding-map variant {variant!r}; expected one of {VARIANTS}")
    bmx = combine_maps(xs)
    bmy = combine_maps(ys)
    return bmx, bmy, bm_xy(bmx, bmy)
