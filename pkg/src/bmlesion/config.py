"""Tool configuration read from a flat ``key = value`` text file.

Lines starting with ``#`` and blank lines are ignored. Lists are
comma-separated; windows are ``low:high`` pairs, e.g.
``windows = 50:449, -505:1980, 446:1960``. Unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable

from .errors import ConfigError
from .evaluation import DEFAULT_FPPI, DEFAULT_MATCH_IOU
from .geometry import AnchorGridSpec
from .labels import ThresholdConfig
from .maps import VARIANTS
from .resampling import DEFAULT_ROI_SIZE
from .windowing import DEFAULT_WINDOWS


@dataclass(frozen=True)
class ToolConfig:
    stride: int = 8
    scales: tuple[float, ...] = (32.0, 64.0, 128.0)
    ratios: tuple[float, ...] = (0.5, 1.0, 2.0)
    iou_min: float = 0.3
    iou_max: float = 0.5
    force_positive: bool = False
    bm_variant: str = "linear"
    roi_out_size: int = DEFAULT_ROI_SIZE
    fppi_targets: tuple[float, ...] = DEFAULT_FPPI
    match_iou: float = DEFAULT_MATCH_IOU
    windows: tuple[tuple[float, float], ...] = DEFAULT_WINDOWS
    bm_loss_reduction: str = "mean"
    batch_size: int = 256
    positive_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        try:
            self.anchor_spec()
            self.thresholds()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.bm_variant not in VARIANTS:
            raise ConfigError(f"bm_variant must be one of {VARIANTS}, got {self.bm_variant!r}")
        if self.roi_out_size < 1:
            raise ConfigError(f"roi_out_size must be >= 1, got {self.roi_out_size}")
        if not self.fppi_targets or any(t <= 0 for t in self.fppi_targets):
            raise ConfigError(f"fppi_targets must be positive, got {self.fppi_targets}")
        if not 0.0 < self.match_iou <= 1.0:
            raise ConfigError(f"match_iou must be in (0, 1], got {self.match_iou}")
        for lo, hi in self.windows:
            if not lo < hi:
                raise ConfigError(f"window low must be below high, got {lo}:{hi}")
        if self.bm_loss_reduction not in ("mean", "sum"):
            raise ConfigError(f"bm_loss_reduction must be mean or sum, got {self.bm_loss_reduction!r}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.positive_fraction < 1.0:
            raise ConfigError(f"positive_fraction must be in (0, 1), got {self.positive_fraction}")

    def anchor_spec(self) -> AnchorGridSpec:
        return AnchorGridSpec(self.stride, self.scales, self.ratios)

    def thresholds(self) -> ThresholdConfig:
        return ThresholdConfig(self.iou_min, self.iou_max, self.force_positive)


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(p) for p in s.split(",") if p.strip())


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _windows(s: str) -> tuple[tuple[float, float], ...]:
    out = []
    for part in s.split(","):
        if not part.strip():
            continue
        lo, sep, hi = part.strip().rpartition(":")
        if not sep:
            raise ValueError(f"window {part.strip()!r} is not low:high")
        out.append((float(lo), float(hi)))
    return tuple(out)


_PARSERS: dict[str, Callable[[str], object]] = {
    "stride": int,
    "scales": _floats,
    "ratios": _floats,
    "iou_min": float,
    "iou_max": float,
    "force_positive": _bool,
    "bm_variant": str.strip,
    "roi_out_size": int,
    "fppi_targets": _floats,
    "match_iou": float,
    "windows": _windows,
    "bm_loss_reduction": str.strip,
    "batch_size": int,
    "positive_fraction": float,
    "seed": int,
}
assert set(_PARSERS) == {f.name for f in fields(ToolConfig)}


def parse_config(text: str, source: str = "<config>") -> ToolConfig:
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        if key not in _PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](value.strip())
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return ToolConfig(**values)  # type: ignore[arg-type]


def load_config(path: str | Path | None) -> ToolConfig:
    if path is None:
        return ToolConfig()
    return parse_config(Path(path).read_text(encoding="utf-8"), str(path))


def dump_config(cfg: ToolConfig) -> str:
    """Serialise ``cfg`` in the same key = value format."""

    def fmt(v: object) -> str:
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, tuple) and v and isinstance(v[0], tuple):
            return ", ".join(f"{lo!r}:{hi!r}" for lo, hi in v)
        if isinstance(v, tuple):
            return ", ".join(repr(x) for x in v)
        return str(v)

    return "".join(f"{f.name} = {fmt(getattr(cfg, f.name))}\n" for f in fields(cfg))

