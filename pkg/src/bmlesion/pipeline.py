"""Per-image batch steps behind the CLI commands.

Each step works on one :class:`AnnotationRecord` at a time and returns plain
data; callers merge results in input order, so output is identical whatever
the degree of parallelism.
"""

from __future__ import annotations

import csv
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from .config import ToolConfig
from .errors import DimensionError, DomainError, ParseError
from .evaluation import DetectionRecord, FrocCurve, froc_curve, sensitivity_at_fppi
from .formats import AnnotationRecord, format_float, read_map, render_pgm, write_csv, write_map
from .geometry import BBox, generate_anchors
from .labels import assign_labels, sample_minibatch
from .losses import AnchorTerms, LossReport, RoiTerms, full_loss
from .maps import MapGrid, build_targets
from .resampling import concat_channels, roi_crop_resize, stride_downsample

T = TypeVar("T")
R = TypeVar("R")

LABEL_FIELDS = ("image_id", "grid_x", "grid_y", "scale_idx", "ratio_idx", "iou", "label")
ROI_FIELDS = ("image_id", "x1", "y1", "x2", "y2")
ROI_INDEX_FIELDS = ("image_id", "roi_index", "x1", "y1", "x2", "y2", "file")
DELTA_NAMES = ("tx", "ty", "tw", "th")
ANCHOR_BATCH_FIELDS = (
    "pred", "label", "reg",
    *(f"pred_{d}" for d in DELTA_NAMES), *(f"tgt_{d}" for d in DELTA_NAMES),
)
ROI_BATCH_FIELDS = (
    "score",
    *(f"pred_{d}" for d in DELTA_NAMES), *(f"tgt_{d}" for d in DELTA_NAMES),
    "pred_bm", "gt_bm",
)


def run_ordered(fn: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> list[R]:
    """Map ``fn`` over ``items`` with up to ``jobs`` processes, keeping input order."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def image_targets(rec: AnnotationRecord, variant: str = "linear") -> tuple[MapGrid, MapGrid, MapGrid]:
    """``(BM_x, BM_y, BM_xy)`` for one image; all-zero maps when it has no boxes."""
    if not rec.boxes:
        z = MapGrid.zeros(rec.width, rec.height)
        return z, z, z
    return build_targets(rec.boxes, rec.width, rec.height, variant)  # type: ignore[arg-type]


def safe_name(image_id: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in image_id)


# --- gen-maps ---------------------------------------------------------------


@dataclass(frozen=True)
class _GenMapsJob:
    rec: AnnotationRecord
    out_dir: str
    variant: str
    render: bool


def _gen_maps_one(job: _GenMapsJob) -> list[str]:
    maps = image_targets(job.rec, job.variant)
    stem = Path(job.out_dir) / safe_name(job.rec.image_id)
    written = []
    for name, m in zip(("bm_x", "bm_y", "bm_xy"), maps):
        path = f"{stem}_{name}.bmap"
        write_map(path, m)
        written.append(path)
        if job.render:
            pgm = f"{stem}_{name}.pgm"
            Path(pgm).write_bytes(render_pgm(m))
            written.append(pgm)
    return written


def gen_maps(
    records: Sequence[AnnotationRecord], out_dir: str | Path, variant: str = "linear",
    render: bool = False, jobs: int = 1,
) -> list[str]:
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    batches = run_ordered(
        _gen_maps_one, [_GenMapsJob(r, str(out_dir), variant, render) for r in records], jobs
    )
    return [p for b in batches for p in b]


# --- label-anchors ----------------------------------------------------------


def _label_rows_one(args: tuple[AnnotationRecord, ToolConfig]) -> list[tuple]:
    rec, cfg = args
    spec = cfg.anchor_spec()
    anchors = generate_anchors(spec, rec.width, rec.height)
    _, _, bmxy = image_targets(rec, cfg.bm_variant)
    bm_r = stride_downsample(bmxy, spec.stride)
    lab = assign_labels(anchors, rec.boxes, bm_r, cfg.thresholds())
    return [
        (rec.image_id, int(c[0]), int(c[1]), int(si), int(ri), format_float(u), format_float(lv))
        for c, si, ri, u, lv in zip(anchors.centers, anchors.scale_idx, anchors.ratio_idx, lab.ious, lab.labels)
    ]


def label_anchors(
    records: Sequence[AnnotationRecord], cfg: ToolConfig, out_path: str | Path, jobs: int = 1
) -> int:
    rows = run_ordered(_label_rows_one, [(r, cfg) for r in records], jobs)
    flat = [row for rs in rows for row in rs]
    write_csv(out_path, LABEL_FIELDS, flat)
    return len(flat)


# --- roi-targets ------------------------------------------------------------


def read_rois(path: str | Path) -> list[tuple[str, BBox]]:
    path = str(path)
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != ROI_FIELDS:
            raise ParseError(path, 1, "<header>", f"expected {','.join(ROI_FIELDS)}")
        for row in reader:
            try:
                box = BBox(*(float(row[k]) for k in ROI_FIELDS[1:]))
            except (TypeError, ValueError) as exc:
                raise ParseError(path, reader.line_num, "x1..y2", str(exc)) from None
            out.append((row["image_id"], box))
    return out


@dataclass(frozen=True)
class _RoiJob:
    rec: AnnotationRecord
    rois: tuple[BBox, ...]
    out_dir: str
    variant: str
    out_size: int


def _roi_targets_one(job: _RoiJob) -> list[tuple]:
    bmx, bmy, _ = image_targets(job.rec, job.variant)
    rows = []
    for k, roi in enumerate(job.rois):
        gt = concat_channels(roi_crop_resize(bmx, roi, job.out_size), roi_crop_resize(bmy, roi, job.out_size))
        name = f"{safe_name(job.rec.image_id)}__roi{k:03d}.bmap"
        write_map(Path(job.out_dir) / name, gt)
        rows.append((job.rec.image_id, k, *(format_float(v) for v in roi.as_tuple()), name))
    return rows


def roi_targets(
    records: Sequence[AnnotationRecord], rois: Sequence[tuple[str, BBox]], out_dir: str | Path,
    cfg: ToolConfig, jobs: int = 1,
) -> int:
    """Write one ``out_size x out_size x 2`` ground-truth map per ROI plus ``index.csv``."""
    by_image: dict[str, list[BBox]] = {}
    known = {r.image_id for r in records}
    for image_id, box in rois:
        if image_id not in known:
            raise DomainError(f"ROI refers to unknown image {image_id!r}")
        by_image.setdefault(image_id, []).append(box)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    jobs_ = [
        _RoiJob(r, tuple(by_image[r.image_id]), str(out_dir), cfg.bm_variant, cfg.roi_out_size)
        for r in records if r.image_id in by_image
    ]
    rows = [row for rs in run_ordered(_roi_targets_one, jobs_, jobs) for row in rs]
    write_csv(Path(out_dir) / "index.csv", ROI_INDEX_FIELDS, rows)
    return len(rows)


# --- loss -------------------------------------------------------------------


def _read_rows(path: Path, fields: Sequence[str]) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != tuple(fields):
            raise ParseError(str(path), 1, "<header>", f"expected {','.join(fields)}")
        return list(reader)


def load_loss_batch(batch_dir: str | Path) -> tuple[AnchorTerms, list[RoiTerms]]:
    """Read ``anchors.csv`` (required) and ``rois.csv`` (optional) from a batch directory.

    ``rois.csv`` names BMAP files relative to the batch directory.
    """
    batch_dir = Path(batch_dir)
    rows = _read_rows(batch_dir / "anchors.csv", ANCHOR_BATCH_FIELDS)
    a = np.array([[float(r[k]) for k in ANCHOR_BATCH_FIELDS] for r in rows], dtype=np.float64).reshape(-1, 11)
    terms = AnchorTerms(
        pred=a[:, 0], labels=a[:, 1], reg_mask=a[:, 2] != 0.0, pred_deltas=a[:, 3:7], target_deltas=a[:, 7:11]
    )
    rois = []
    roi_path = batch_dir / "rois.csv"
    if roi_path.exists():
        for r in _read_rows(roi_path, ROI_BATCH_FIELDS):
            pred_bm = read_map(batch_dir / r["pred_bm"])
            gt_bm = read_map(batch_dir / r["gt_bm"])
            if pred_bm.shape != gt_bm.shape:
                raise DimensionError(f"{r['pred_bm']} and {r['gt_bm']} differ in shape")
            rois.append(
                RoiTerms(
                    score=float(r["score"]),
                    pred_deltas=np.array([float(r[f"pred_{d}"]) for d in DELTA_NAMES]),
                    target_deltas=np.array([float(r[f"tgt_{d}"]) for d in DELTA_NAMES]),
                    pred_bm=pred_bm,
                    gt_bm=gt_bm,
                )
            )
    return terms, rois


def format_report(report: LossReport) -> str:
    lines = []
    for k, v in report.as_dict().items():
        lines.append(f"{k}={format_float(v) if isinstance(v, float) else v}")
    return "\n".join(lines) + "\n"


def evaluate_loss(batch_dir: str | Path, cfg: ToolConfig) -> LossReport:
    anchors, rois = load_loss_batch(batch_dir)
    return full_loss(anchors, rois, cfg.bm_loss_reduction)  # type: ignore[arg-type]


# --- eval -------------------------------------------------------------------


def evaluate_froc(
    records: Sequence[AnnotationRecord], dets: Iterable[DetectionRecord], match_iou: float,
    fppi_targets: Sequence[float],
) -> tuple[FrocCurve, list[float]]:
    images: dict[str, tuple[list[DetectionRecord], tuple[BBox, ...]]] = {
        r.image_id: ([], r.boxes) for r in records
    }
    for d in dets:
        if d.image_id not in images:
            raise DomainError(f"prediction for unknown image {d.image_id!r}")
        images[d.image_id][0].append(d)
    curve = froc_curve(images, match_iou)
    return curve, sensitivity_at_fppi(curve, fppi_targets)


def curve_rows(curve: FrocCurve) -> list[tuple[str, str, str]]:
    return [(format_float(p.threshold), format_float(p.fppi), format_float(p.sensitivity)) for p in curve]


def sensitivity_table(targets: Sequence[float], sens: Sequence[float]) -> str:
    head = "FPPI        " + "".join(f"@{t:g}".rjust(9) for t in targets)
    body = "Sensitivity " + "".join(f"{100.0 * s:8.2f}%" for s in sens)
    return head + "\n" + body + "\n"


# --- loss-batch assembly for synthetic runs ---------------------------------


def make_loss_batch(
    labels_csv: str | Path, roi_dir: str | Path | None, out_dir: str | Path, cfg: ToolConfig,
    noise: float = 0.1,
) -> tuple[int, int]:
    """Assemble a loss batch from ``label-anchors`` / ``roi-targets`` outputs.

    Anchors are drawn per image with the seeded minibatch sampler; predictions
    are targets plus seeded Gaussian noise. Returns ``(n_anchors, n_rois)``.
    """
    rng = np.random.default_rng(cfg.seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = _read_rows(Path(labels_csv), LABEL_FIELDS)
    per_image: dict[str, list[dict[str, str]]] = {}
    for r in rows:
        per_image.setdefault(r["image_id"], []).append(r)

    anchor_rows = []
    for k, image_id in enumerate(per_image):
        img_rows = per_image[image_id]
        labels = np.array([float(r["label"]) for r in img_rows])
        ious = np.array([float(r["iou"]) for r in img_rows])
        idx = sample_minibatch(labels, cfg.batch_size, cfg.positive_fraction, seed=cfg.seed + k)
        for i in idx:
            label = labels[i]
            reg = bool(ious[i] >= cfg.iou_max)
            pred = float(np.clip(label + rng.normal(0.0, noise), 0.0, 1.0))
            tgt = rng.normal(0.0, 0.5, 4)
            pd = tgt + rng.normal(0.0, noise, 4)
            anchor_rows.append(
                (format_float(pred), format_float(label), int(reg),
                 *(format_float(v) for v in pd), *(format_float(v) for v in tgt))
            )
    write_csv(out_dir / "anchors.csv", ANCHOR_BATCH_FIELDS, anchor_rows)

    n_rois = 0
    if roi_dir is not None:
        roi_dir = Path(roi_dir)
        roi_rows = []
        for r in _read_rows(roi_dir / "index.csv", ROI_INDEX_FIELDS):
            gt = read_map(roi_dir / r["file"])
            shutil.copyfile(roi_dir / r["file"], out_dir / r["file"])
            pred = MapGrid(np.clip(gt.values + rng.normal(0.0, noise, gt.shape), 0.0, 1.0))
            pred_name = "pred_" + r["file"]
            write_map(out_dir / pred_name, pred)
            tgt = rng.normal(0.0, 0.5, 4)
            pd = tgt + rng.normal(0.0, noise, 4)
            score = float(np.clip(1.0 - abs(rng.normal(0.0, noise)), 0.0, 1.0))
            roi_rows.append(
                (format_float(score), *(format_float(v) for v in pd), *(format_float(v) for v in tgt),
                 pred_name, r["file"])
            )
        write_csv(out_dir / "rois.csv", ROI_BATCH_FIELDS, roi_rows)
        n_rois = len(roi_rows)
    return len(anchor_rows), n_rois
