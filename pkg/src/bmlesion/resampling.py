"""Bilinear resampling of map grids.

Every operation here samples with the same half-pixel-centred convention:
cell index ``i`` has its centre at continuous coordinate ``i + 0.5``. A
continuous point ``p`` therefore reads index coordinate ``p - 0.5``, and
index coordinates within half a cell of the edge are clamped to the border
cell. ROI crops additionally read 0 for points outside the map's continuous
extent ``[0, W] x [0, H]``.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, DomainError
from .geometry import BBox
from .maps import MapGrid

DEFAULT_ROI_SIZE = 128


def _sample(values: np.ndarray, sx: np.ndarray, sy: np.ndarray, zero_outside: bool = False) -> np.ndarray:
    """Bilinear samples on the separable grid ``sy x sx`` of index coordinates."""
    _, h, w = values.shape
    cx = np.clip(sx, 0.0, w - 1)
    cy = np.clip(sy, 0.0, h - 1)
    x0 = np.floor(cx).astype(np.int64)
    y0 = np.floor(cy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (cx - x0)[None, None, :]
    fy = (cy - y0)[None, :, None]

    top_l = values[:, y0[:, None], x0[None, :]]
    top_r = values[:, y0[:, None], x1[None, :]]
    bot_l = values[:, y1[:, None], x0[None, :]]
    bot_r = values[:, y1[:, None], x1[None, :]]
    top = top_l + (top_r - top_l) * fx
    bot = bot_l + (bot_r - bot_l) * fx
    out = top + (bot - top) * fy
    # bilinear output is a convex combination; remove rounding overshoot
    out = np.clip(out, values.min(), values.max())

    if zero_outside:
        inside_x = (sx >= -0.5) & (sx <= w - 0.5)
        inside_y = (sy >= -0.5) & (sy <= h - 0.5)
        out = out * (inside_y[:, None] & inside_x[None, :])[None]
    return out


def resize_bilinear(m: MapGrid, out_w: int, out_h: int) -> MapGrid:
    """Resize every channel to ``out_w x out_h`` (align-corners=False)."""
    if out_w < 1 or out_h < 1:
        raise DimensionError(f"output size must be positive, got {out_w}x{out_h}")
    if (out_w, out_h) == (m.width, m.height):
        return MapGrid(m.values.copy())
    sx = (np.arange(out_w) + 0.5) * m.width / out_w - 0.5
    sy = (np.arange(out_h) + 0.5) * m.height / out_h - 0.5
    return MapGrid(_sample(m.values, sx, sy))


def stride_downsample(m: MapGrid, r: int) -> MapGrid:
    """Downsample by the output stride ``r``.

    Cell ``(gx, gy)`` of the result reads the input at the anchor centre
    ``((gx + 0.5) r, (gy + 0.5) r)``, the same point used to label anchors.
    """
    if r < 1 or int(r) != r:
        raise DimensionError(f"stride must be a positive integer, got {r}")
    r = int(r)
    if m.width % r or m.height % r:
        raise DimensionError(f"map size {m.width}x{m.height} not divisible by stride {r}")
    gw, gh = m.width // r, m.height // r
    sx = (np.arange(gw) + 0.5) * r - 0.5
    sy = (np.arange(gh) + 0.5) * r - 0.5
    return MapGrid(_sample(m.values, sx, sy))


def sample_at(m: MapGrid, x: float, y: float, channel: int = 0) -> float:
    """Bilinear value at continuous point ``(x, y)``."""
    v = _sample(m.values[channel : channel + 1], np.array([x - 0.5]), np.array([y - 0.5]))
    return float(v[0, 0, 0])


def roi_crop_resize(m: MapGrid, roi: BBox, out_size: int = DEFAULT_ROI_SIZE) -> MapGrid:
    """Crop ``roi`` out of ``m`` and resample it to ``out_size x out_size``.

    ROI-align style: the ROI is split into ``out_size`` equal bins per axis and
    each output cell reads the bilinear value at its bin centre. ROI
    coordinates are not quantised.
    """
    if out_size < 1:
        raise DimensionError(f"out_size must be positive, got {out_size}")
    iw = min(roi.x2, m.width) - max(roi.x1, 0.0)
    ih = min(roi.y2, m.height) - max(roi.y1, 0.0)
    if iw <= 0.0 or ih <= 0.0:
        raise DomainError(f"roi {roi.as_tuple()} does not intersect the {m.width}x{m.height} map")
    steps = np.arange(out_size) + 0.5
    px = roi.x1 + steps * (roi.width / out_size)
    py = roi.y1 + steps * (roi.height / out_size)
    return MapGrid(_sample(m.values, px - 0.5, py - 0.5, zero_outside=True))


def concat_channels(a: MapGrid, b: MapGrid) -> MapGrid:
    """Stack ``b``'s channels after ``a``'s."""
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionError(f"cannot concatenate {a.width}x{a.height} with {b.width}x{b.height}")
    return MapGrid(np.concatenate([a.values, b.values], axis=0))
