"""CT intensity windowing."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ConfigError
from .maps import MapGrid

# soft-tissue, wide and bone-ish windows used for three-channel CT input (HU)
DEFAULT_WINDOWS: tuple[tuple[float, float], ...] = ((50.0, 449.0), (-505.0, 1980.0), (446.0, 1960.0))


def apply_window(intensity: MapGrid | np.ndarray, low: float, high: float) -> MapGrid:
    """Linearly map ``[low, high]`` HU to ``[0, 255]``, clamping outside the window."""
    if not low < high:
        raise ConfigError(f"window low must be below high, got [{low}, {high}]")
    v = intensity.values if isinstance(intensity, MapGrid) else np.asarray(intensity, dtype=np.float64)
    scaled = np.clip((v - low) / (high - low), 0.0, 1.0) * 255.0
    return MapGrid(scaled)


def window_stack(intensity: MapGrid | np.ndarray, windows: Sequence[tuple[float, float]] = DEFAULT_WINDOWS) -> MapGrid:
    """One windowed channel per ``(low, high)`` pair, stacked in order."""
    chans = [apply_window(intensity, lo, hi).values for lo, hi in windows]
    return MapGrid(np.concatenate(chans, axis=0))
