"""Annotation/prediction text formats, the BMAP binary map format and PGM output.

Annotations are JSON lines, one image per line::

    {"image_id": "img_000", "width": 800, "height": 800, "boxes": [[x1, y1, x2, y2], ...]}

Predictions are CSV with header ``image_id,x1,y1,x2,y2,score``.

BMAP layout (all little-endian): magic ``b"BMAP"``, then uint32 version (1),
width, height, channels, then ``width * height * channels`` float32 values,
channel-major then row-major.
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, ParseError
from .evaluation import DetectionRecord
from .geometry import BBox
from .maps import MapGrid

BMAP_MAGIC = b"BMAP"
BMAP_VERSION = 1
_HEADER = struct.Struct("<4sIIII")

PREDICTION_FIELDS = ("image_id", "x1", "y1", "x2", "y2", "score")


@dataclass(frozen=True)
class AnnotationRecord:
    image_id: str
    width: int
    height: int
    boxes: tuple[BBox, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "image_id": self.image_id,
                "width": self.width,
                "height": self.height,
                "boxes": [list(b.as_tuple()) for b in self.boxes],
            }
        )


# --- annotations -------------------------------------------------------------


def _int_field(obj: dict, key: str, path: str, lineno: int) -> int:
    v = obj.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ParseError(path, lineno, key, f"expected an integer, got {v!r}")
    if v < 1:
        raise ParseError(path, lineno, key, f"must be >= 1, got {v}")
    return v


def parse_annotation_line(text: str, path: str = "<string>", lineno: int = 1) -> AnnotationRecord:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(path, lineno, "<json>", str(exc)) from None
    if not isinstance(obj, dict):
        raise ParseError(path, lineno, "<json>", "expected a JSON object")
    unknown = set(obj) - {"image_id", "width", "height", "boxes"}
    if unknown:
        raise ParseError(path, lineno, sorted(unknown)[0], "unknown field")

    image_id = obj.get("image_id")
    if not isinstance(image_id, str) or not image_id:
        raise ParseError(path, lineno, "image_id", f"expected a non-empty string, got {image_id!r}")
    width = _int_field(obj, "width", path, lineno)
    height = _int_field(obj, "height", path, lineno)

    raw_boxes = obj.get("boxes")
    if not isinstance(raw_boxes, list):
        raise ParseError(path, lineno, "boxes", "expected a list of [x1, y1, x2, y2]")
    boxes = []
    for k, raw in enumerate(raw_boxes):
        name = f"boxes[{k}]"
        if (
            not isinstance(raw, list)
            or len(raw) != 4
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw)
        ):
            raise ParseError(path, lineno, name, f"expected 4 numbers, got {raw!r}")
        try:
            boxes.append(BBox.from_seq(raw))
        except ValueError as exc:
            raise ParseError(path, lineno, name, str(exc)) from None
    return AnnotationRecord(image_id, width, height, tuple(boxes))


def read_annotations(path: str | Path) -> list[AnnotationRecord]:
    """Read and validate an annotations JSONL file; blank lines are skipped."""
    path = str(path)
    records = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = parse_annotation_line(line, path, lineno)
            if rec.image_id in seen:
                raise ParseError(path, lineno, "image_id", f"duplicate image id {rec.image_id!r}")
            seen.add(rec.image_id)
            records.append(rec)
    return records


def write_annotations(path: str | Path, records: Iterable[AnnotationRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


# --- predictions ------------------------------------------------------------


def _float_field(row: dict, key: str, path: str, lineno: int) -> float:
    raw = row.get(key)
    try:
        v = float(raw)
    except (TypeError, ValueError):
        raise ParseError(path, lineno, key, f"expected a number, got {raw!r}") from None
    if not math.isfinite(v):
        raise ParseError(path, lineno, key, f"must be finite, got {raw!r}")
    return v


def read_predictions(path: str | Path) -> list[DetectionRecord]:
    path = str(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError(path, 1, "<header>", "missing header")
        if tuple(reader.fieldnames) != PREDICTION_FIELDS:
            raise ParseError(path, 1, "<header>", f"expected {','.join(PREDICTION_FIELDS)}")
        out = []
        for row in reader:
            lineno = reader.line_num
            if None in row or any(v is None for v in row.values()):
                raise ParseError(path, lineno, "<row>", "wrong number of columns")
            image_id = row["image_id"]
            if not image_id:
                raise ParseError(path, lineno, "image_id", "empty image id")
            x1, y1, x2, y2 = (_float_field(row, k, path, lineno) for k in ("x1", "y1", "x2", "y2"))
            try:
                box = BBox(x1, y1, x2, y2)
            except ValueError as exc:
                raise ParseError(path, lineno, "x1..y2", str(exc)) from None
            score = _float_field(row, "score", path, lineno)
            if not 0.0 <= score <= 1.0:
                raise ParseError(path, lineno, "score", f"must be in [0, 1], got {score}")
            out.append(DetectionRecord(image_id, box, score))
    return out


def write_predictions(path: str | Path, dets: Iterable[DetectionRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PREDICTION_FIELDS)
        for d in dets:
            writer.writerow([d.image_id, *(repr(v) for v in d.box.as_tuple()), repr(d.score)])


# --- BMAP -------------------------------------------------------------------


def encode_map(m: MapGrid) -> bytes:
    header = _HEADER.pack(BMAP_MAGIC, BMAP_VERSION, m.width, m.height, m.channels)
    return header + np.ascontiguousarray(m.values, dtype="<f4").tobytes()


def decode_map(data: bytes) -> MapGrid:
    if len(data) < _HEADER.size:
        raise FormatError(f"truncated BMAP header ({len(data)} bytes)")
    magic, version, w, h, c = _HEADER.unpack_from(data)
    if magic != BMAP_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != BMAP_VERSION:
        raise FormatError(f"unsupported BMAP version {version}")
    if min(w, h, c) < 1:
        raise FormatError(f"invalid dimensions {w}x{h}x{c}")
    expected = _HEADER.size + 4 * w * h * c
    if len(data) != expected:
        raise FormatError(f"payload is {len(data)} bytes, expected {expected}")
    values = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(c, h, w)
    return MapGrid(values.astype(np.float64))


def write_map(path: str | Path, m: MapGrid) -> None:
    Path(path).write_bytes(encode_map(m))


def read_map(path: str | Path) -> MapGrid:
    return decode_map(Path(path).read_bytes())


# --- PGM --------------------------------------------------------------------


def render_pgm(m: MapGrid, channel: int = 0) -> bytes:
    """8-bit binary PGM of one channel; ``round(255 * clamp(v, 0, 1))`` rounding half up."""
    if not 0 <= channel < m.channels:
        raise IndexError(f"channel {channel} out of range for {m.channels}-channel map")
    v = np.clip(m.values[channel], 0.0, 1.0)
    pix = np.floor(255.0 * v + 0.5).astype(np.uint8)
    return f"P5\n{m.width} {m.height}\n255\n".encode("ascii") + pix.tobytes()


# --- small CSV helpers used by the CLI --------------------------------------


def format_float(v: float) -> str:
    return repr(float(v))


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")
