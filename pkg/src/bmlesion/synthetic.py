"""Seeded synthetic annotation/prediction/ROI sets for smoke runs and demos."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .evaluation import DetectionRecord
from .formats import AnnotationRecord, format_float, write_annotations, write_csv, write_predictions
from .geometry import BBox
from .pipeline import ROI_FIELDS


def _random_box(rng: np.random.Generator, w: int, h: int) -> BBox:
    bw = int(rng.integers(8, max(9, w // 3)))
    bh = int(rng.integers(8, max(9, h // 3)))
    x1 = int(rng.integers(0, w - bw))
    y1 = int(rng.integers(0, h - bh))
    return BBox(x1, y1, x1 + bw, y1 + bh)


def _jitter(rng: np.random.Generator, box: BBox, scale: float, w: int, h: int) -> BBox:
    d = rng.normal(0.0, scale, 4) * np.array([box.width, box.height, box.width, box.height])
    x1, y1, x2, y2 = (np.array(box.as_tuple()) + d).round(2)
    x1, x2 = max(0.0, min(x1, x2 - 1.0)), min(float(w), max(x2, x1 + 1.0))
    y1, y2 = max(0.0, min(y1, y2 - 1.0)), min(float(h), max(y2, y1 + 1.0))
    return BBox(x1, y1, x2, y2)


def make_synthetic(
    n_images: int = 20, size: int = 128, max_boxes: int = 3, seed: int = 0
) -> tuple[list[AnnotationRecord], list[DetectionRecord], list[tuple[str, BBox]]]:
    """Annotations with 1..max_boxes lesions per image, noisy detections and ROIs."""
    rng = np.random.default_rng(seed)
    records, dets, rois = [], [], []
    for i in range(n_images):
        image_id = f"img_{i:03d}"
        boxes = tuple(_random_box(rng, size, size) for _ in range(int(rng.integers(1, max_boxes + 1))))
        records.append(AnnotationRecord(image_id, size, size, boxes))
        for b in boxes:
            if rng.uniform() < 0.85:
                score = round(float(rng.uniform(0.4, 1.0)), 4)
                dets.append(DetectionRecord(image_id, _jitter(rng, b, 0.05, size, size), score))
            rois.append((image_id, _jitter(rng, b, 0.1, size, size)))
        for _ in range(int(rng.integers(0, 6))):
            score = round(float(rng.uniform(0.0, 0.8)), 4)
            dets.append(DetectionRecord(image_id, _random_box(rng, size, size), score))
    return records, dets, rois


def write_synthetic(out_dir: str | Path, **kwargs) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records, dets, rois = make_synthetic(**kwargs)
    paths = {
        "annotations": out_dir / "annotations.jsonl",
        "predictions": out_dir / "predictions.csv",
        "rois": out_dir / "rois.csv",
    }
    write_annotations(paths["annotations"], records)
    write_predictions(paths["predictions"], dets)
    write_csv(
        paths["rois"], ROI_FIELDS, [(i, *(format_float(v) for v in b.as_tuple())) for i, b in rois]
    )
    return paths
