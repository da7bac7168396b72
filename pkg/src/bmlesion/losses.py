"""Detection losses with analytic gradients.

All reductions go through :func:`math.fsum`, so results are correctly rounded
sums that do not depend on the order of anchors or ROIs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .errors import DegenerateInputError, DimensionError
from .labels import DROPOUT, AnchorLabelVector
from .maps import MapGrid

Reduction = Literal["mean", "sum"]


def _fsum(a: np.ndarray) -> float:
    return math.fsum(np.ravel(a).tolist())


def _label_values(labels: AnchorLabelVector | np.ndarray) -> np.ndarray:
    if isinstance(labels, AnchorLabelVector):
        return labels.labels
    return np.asarray(labels, dtype=np.float64)


def anchor_cls_loss(pred, labels: AnchorLabelVector | np.ndarray) -> tuple[float, np.ndarray]:
    """Graded anchor classification loss and its gradient w.r.t. ``pred``.

    Squared error ``(pred - label)^2`` averaged over the ``M`` anchors that
    are not dropped out (label -1). Dropped anchors get an exactly-zero
    gradient.
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = _label_values(labels).ravel()
    if pred.shape != target.shape:
        raise DimensionError(f"{len(pred)} predictions for {len(target)} labels")
    trained = target != DROPOUT
    m = int(trained.sum())
    if m == 0:
        raise DegenerateInputError("no trainable anchors: every label is -1")
    diff = pred[trained] - target[trained]
    value = _fsum(diff * diff) / m
    grad = np.zeros_like(pred)
    grad[trained] = 2.0 * diff / m
    return value, grad


def _as_values(x) -> np.ndarray:
    return x.values if isinstance(x, MapGrid) else np.asarray(x, dtype=np.float64)


def bm_branch_loss(pred, gt, reduction: Reduction = "mean") -> tuple[float, np.ndarray]:
    """Squared error between predicted and target ``[BM_x, BM_y]`` ROI maps.

    ``reduction='mean'`` averages over every cell of both channels; ``'sum'``
    is the unnormalised alternative.
    """
    p = _as_values(pred)
    g = _as_values(gt)
    if p.shape != g.shape:
        raise DimensionError(f"prediction shape {p.shape} != target shape {g.shape}")
    if p.ndim != 3 or p.shape[0] != 2:
        raise DimensionError(f"expected 2-channel maps, got shape {p.shape}")
    diff = p - g
    total = _fsum(diff * diff)
    if reduction == "mean":
        return total / diff.size, 2.0 * diff / diff.size
    if reduction == "sum":
        return total, 2.0 * diff
    raise ValueError(f"unknown reduction {reduction!r}")


def _smooth_l1_terms(diff: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.abs(diff)
    quad = a < 1.0
    value = np.where(quad, 0.5 * diff * diff, a - 0.5)
    grad = np.where(quad, diff, np.sign(diff))
    return value, grad


def smooth_l1_reg_loss(pred_deltas, target_deltas, active_mask=None) -> tuple[float, np.ndarray]:
    """Smooth-L1 box regression loss over active entries.

    Per entry the four components are summed; the result is averaged over the
    active entries. With nothing active the loss is 0 with zero gradient.
    """
    p = np.asarray(pred_deltas, dtype=np.float64).reshape(-1, 4)
    t = np.asarray(target_deltas, dtype=np.float64).reshape(-1, 4)
    if p.shape != t.shape:
        raise DimensionError(f"{len(p)} predicted deltas for {len(t)} targets")
    active = np.ones(len(p), dtype=bool) if active_mask is None else np.asarray(active_mask, dtype=bool)
    if active.shape != (len(p),):
        raise DimensionError(f"active mask has {active.size} entries for {len(p)} deltas")
    grad = np.zeros_like(p)
    n = int(active.sum())
    if n == 0:
        return 0.0, grad
    value, g = _smooth_l1_terms(p[active] - t[active])
    grad[active] = g / n
    return _fsum(value) / n, grad


@dataclass
class AnchorTerms:
    """Stage-1 inputs for :func:`full_loss`.

    ``reg_mask`` selects anchors that carry a regression term; by default the
    positive branch of an :class:`AnchorLabelVector`, else ``label > 0``.
    """

    pred: np.ndarray
    labels: AnchorLabelVector | np.ndarray
    pred_deltas: np.ndarray
    target_deltas: np.ndarray
    reg_mask: np.ndarray | None = None

    def regression_mask(self) -> np.ndarray:
        if self.reg_mask is not None:
            return np.asarray(self.reg_mask, dtype=bool)
        if isinstance(self.labels, AnchorLabelVector):
            return self.labels.positive
        return _label_values(self.labels) > 0.0


@dataclass
class RoiTerms:
    """Stage-2 inputs for one positive ROI."""

    score: float
    pred_deltas: np.ndarray
    target_deltas: np.ndarray
    pred_bm: MapGrid | np.ndarray
    gt_bm: MapGrid | np.ndarray


@dataclass(frozen=True)
class LossReport:
    total: float
    anchor_cls: float
    anchor_reg: float
    roi_bbox: float
    roi_bm: float
    m_anchors: int
    n_rois: int

    def as_dict(self) -> dict[str, float | int]:
        return {
            "total": self.total,
            "anchor_cls": self.anchor_cls,
            "anchor_reg": self.anchor_reg,
            "roi_bbox": self.roi_bbox,
            "roi_bm": self.roi_bm,
            "m_anchors": self.m_anchors,
            "n_rois": self.n_rois,
        }


def roi_box_loss(roi: RoiTerms) -> float:
    """Per-ROI box-branch stand-in: ``(score - 1)^2`` plus smooth-L1 on deltas."""
    cls = (float(roi.score) - 1.0) ** 2
    diff = np.asarray(roi.pred_deltas, dtype=np.float64) - np.asarray(roi.target_deltas, dtype=np.float64)
    if diff.shape != (4,):
        raise DimensionError(f"ROI deltas must have 4 components, got shape {diff.shape}")
    reg, _ = _smooth_l1_terms(diff)
    return math.fsum([cls, *reg.tolist()])


def full_loss(
    anchor_terms: AnchorTerms,
    roi_terms: Sequence[RoiTerms] = (),
    bm_reduction: Reduction = "mean",
) -> LossReport:
    """Combine stage-1 and stage-2 losses.

    ``(1/M) sum_m (L_reg + L_anc) + (1/N) sum_n (L_B + L_BM)`` where ``M``
    counts non-dropped anchors and ``N`` positive ROIs. Regression terms are
    summed over ``reg_mask`` anchors but still divided by ``M``. With no
    ROIs the stage-2 part is 0.
    """
    pred = np.asarray(anchor_terms.pred, dtype=np.float64).ravel()
    target = _label_values(anchor_terms.labels).ravel()
    if pred.shape != target.shape:
        raise DimensionError(f"{len(pred)} predictions for {len(target)} labels")
    trained = target != DROPOUT
    m = int(trained.sum())
    if m == 0:
        raise DegenerateInputError("no trainable anchors: every label is -1")

    diff = pred[trained] - target[trained]
    anchor_cls = _fsum(diff * diff) / m

    pd = np.asarray(anchor_terms.pred_deltas, dtype=np.float64).reshape(-1, 4)
    td = np.asarray(anchor_terms.target_deltas, dtype=np.float64).reshape(-1, 4)
    if len(pd) != len(pred) or len(td) != len(pred):
        raise DimensionError("delta arrays must have one row per anchor")
    reg_mask = anchor_terms.regression_mask() & trained
    reg_terms, _ = _smooth_l1_terms(pd[reg_mask] - td[reg_mask])
    anchor_reg = _fsum(reg_terms) / m

    n = len(roi_terms)
    if n:
        roi_bbox = math.fsum(roi_box_loss(r) for r in roi_terms) / n
        roi_bm = math.fsum(bm_branch_loss(r.pred_bm, r.gt_bm, bm_reduction)[0] for r in roi_terms) / n
    else:
        roi_bbox = roi_bm = 0.0

    total = math.fsum([anchor_cls, anchor_reg, roi_bbox, roi_bm])
    return LossReport(
        total=total,
        anchor_cls=anchor_cls,
        anchor_reg=anchor_reg,
        roi_bbox=roi_bbox,
        roi_bm=roi_bm,
        m_anchors=m,
        n_rois=n,
    )


# --- gradient verification -------------------------------------------------

LOSS_KINDS = ("anchor_cls", "bm_branch", "smooth_l1")
SMOOTH_L1_KINK_BAND = 0.01


@dataclass
class GradInstance:
    """A loss evaluated at ``x`` with everything else held fixed."""

    x: np.ndarray
    fn: Callable[[np.ndarray], tuple[float, np.ndarray]]
    meta: dict = field(default_factory=dict)


def make_instance(loss_kind: str, **arrays) -> GradInstance:
    """Wrap a loss so it can be differentiated w.r.t. its prediction input."""
    if loss_kind == "anchor_cls":
        labels = arrays["labels"]
        return GradInstance(np.asarray(arrays["pred"], dtype=np.float64), lambda x: anchor_cls_loss(x, labels))
    if loss_kind == "bm_branch":
        gt = _as_values(arrays["gt"])
        red = arrays.get("reduction", "mean")
        return GradInstance(_as_values(arrays["pred"]).astype(np.float64), lambda x: bm_branch_loss(x, gt, red))
    if loss_kind == "smooth_l1":
        target = np.asarray(arrays["target"], dtype=np.float64)
        mask = arrays.get("mask")
        return GradInstance(
            np.asarray(arrays["pred"], dtype=np.float64), lambda x: smooth_l1_reg_loss(x, target, mask)
        )
    raise ValueError(f"unknown loss kind {loss_kind!r}; expected one of {LOSS_KINDS}")


def random_instance(loss_kind: str, rng: np.random.Generator) -> GradInstance:
    """Random test instance of ``loss_kind`` sized for exhaustive differencing."""
    if loss_kind == "anchor_cls":
        n = int(rng.integers(5, 60))
        labels = rng.uniform(0.0, 1.0, n)
        kind = rng.integers(0, 3, n)
        labels[kind == 0] = 0.0
        labels[kind == 1] = DROPOUT
        labels[0] = rng.uniform(0.5, 1.0)  # at least one trainable anchor
        return make_instance("anchor_cls", pred=rng.uniform(0.0, 1.0, n), labels=labels)
    if loss_kind == "bm_branch":
        h, w = (int(v) for v in rng.integers(2, 9, 2))
        return make_instance(
            "bm_branch", pred=rng.uniform(0.0, 1.0, (2, h, w)), gt=rng.uniform(0.0, 1.0, (2, h, w))
        )
    if loss_kind == "smooth_l1":
        n = int(rng.integers(1, 12))
        target = rng.normal(0.0, 1.0, (n, 4))
        diff = rng.uniform(-3.0, 3.0, (n, 4))
        near = np.abs(np.abs(diff) - 1.0) <= SMOOTH_L1_KINK_BAND
        diff[near] = np.sign(diff[near]) * 0.5
        mask = rng.uniform(size=n) < 0.7
        mask[0] = True
        return make_instance("smooth_l1", pred=target + diff, target=target, mask=mask)
    raise ValueError(f"unknown loss kind {loss_kind!r}; expected one of {LOSS_KINDS}")


def finite_diff_check(loss_kind: str | GradInstance, instance=None, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Error per coordinate is ``|g_a - g_fd| / max(1e-8, |g_a| + |g_fd|)``.
    ``loss_kind`` may be a kind name with ``instance`` a dict of arrays for
    :func:`make_instance`, or a ready :class:`GradInstance`.
    """
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    if isinstance(loss_kind, GradInstance):
        inst = loss_kind
    elif isinstance(instance, GradInstance):
        inst = instance
    else:
        inst = make_instance(loss_kind, **(instance or {}))

    x0 = inst.x
    _, analytic = inst.fn(x0)
    analytic = np.asarray(analytic, dtype=np.float64).reshape(x0.shape)
    numeric = np.zeros_like(x0)
    flat = x0.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += h
        xm[i] -= h
        fp, _ = inst.fn(xp.reshape(x0.shape))
        fm, _ = inst.fn(xm.reshape(x0.shape))
        num_flat[i] = (fp - fm) / (2.0 * h)
    err = np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(err.max()) if err.size else 0.0
