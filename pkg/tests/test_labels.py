import numpy as np
import pytest

from bmlesion.errors import DimensionError
from bmlesion.geometry import AnchorGridSpec, BBox, generate_anchors
from bmlesion.labels import AnchorLabelVector, ThresholdConfig, assign_labels, sample_minibatch
from bmlesion.maps import MapGrid, build_targets
from bmlesion.resampling import stride_downsample

from conftest import random_box
from oracles import brute_force_labels, scalar_bilinear


def scene(gts, w=16, h=16, spec=AnchorGridSpec(4, (8.0,), (1.0,))):
    anchors = generate_anchors(spec, w, h)
    _, _, bxy = build_targets(gts, w, h)
    return anchors, stride_downsample(bxy, spec.stride), bxy


def test_threshold_validation():
    with pytest.raises(ValueError):
        ThresholdConfig(0.5, 0.5)
    with pytest.raises(ValueError):
        ThresholdConfig(-0.1, 0.5)
    with pytest.raises(ValueError):
        ThresholdConfig(0.3, 1.2)


def test_congruent_anchor_reads_map_at_centre():
    gt = BBox(2, 2, 10, 10)
    anchors, bm_r, bxy = scene([gt])
    lab = assign_labels(anchors, [gt], bm_r)
    i = next(k for k in range(len(anchors)) if anchors.box(k) == gt)
    gx, gy = anchors.centers[i]
    assert lab.ious[i] == 1.0 and lab.positive[i]
    assert lab.labels[i] == bm_r.at(gx, gy)
    assert lab.labels[i] == bm_r.values.max()
    # the lookup is the full-resolution map sampled at the anchor centre (6, 6)
    assert lab.labels[i] == pytest.approx(scalar_bilinear(bxy.values[0], 6.0, 6.0), abs=1e-12)


def test_disjoint_anchor_is_negative():
    gt = BBox(0, 0, 4, 4)
    anchors, bm_r, _ = scene([gt])
    lab = assign_labels(anchors, [gt], bm_r)
    far = [k for k in range(len(anchors)) if anchors.box(k).x1 >= 8 and anchors.box(k).y1 >= 8]
    assert far and all(lab.ious[k] == 0.0 and lab.labels[k] == 0.0 for k in far)


def test_dropout_band():
    # anchor (0,0,10,10) vs gt (0,0,10,4): IoU 0.4
    spec = AnchorGridSpec(10, (10.0,), (1.0,))
    anchors = generate_anchors(spec, 10, 10)
    gt = BBox(0, 0, 10, 4)
    lab = assign_labels(anchors, [gt], MapGrid.zeros(1, 1))
    assert lab.ious[0] == pytest.approx(0.4)
    assert lab.labels[0] == -1.0
    assert lab.dropout[0]


def test_threshold_equality_counts_as_trained():
    spec = AnchorGridSpec(10, (10.0,), (1.0,))
    anchors = generate_anchors(spec, 10, 10)
    bm = MapGrid(np.full((1, 1, 1), 0.8))
    at_max = assign_labels(anchors, [BBox(0, 0, 10, 5)], bm, ThresholdConfig(0.3, 0.5))
    assert at_max.labels[0] == 0.8
    at_min = assign_labels(anchors, [BBox(0, 0, 10, 3)], bm, ThresholdConfig(0.3, 0.5))
    assert at_min.labels[0] == 0.0


def test_exhaustive_oracle_16x16(rng):
    spec = AnchorGridSpec(4, (4.0, 8.0), (0.5, 1.0, 2.0))
    for _ in range(20):
        gts = [random_box(rng, 16, 16, min_size=3, integer=True) for _ in range(2)]
        anchors, bm_r, _ = scene(gts, spec=spec)
        lab = assign_labels(anchors, gts, bm_r)
        boxes = [anchors.box(k) for k in range(len(anchors))]
        labels, ious = brute_force_labels(boxes, anchors.centers, gts, bm_r.values[0], 0.3, 0.5)
        np.testing.assert_array_equal(lab.ious, ious)
        np.testing.assert_array_equal(lab.labels, labels)


def test_partition_and_monotonicity(rng):
    spec = AnchorGridSpec(4, (8.0, 16.0), (0.5, 1.0, 2.0))
    gts = [random_box(rng, 64, 64, min_size=6) for _ in range(3)]
    anchors, bm_r, _ = scene(gts, 64, 64, spec)
    prev_pos = -1
    for iou_max in (0.7, 0.65, 0.6, 0.55, 0.5):
        lab = assign_labels(anchors, gts, bm_r, ThresholdConfig(0.3, iou_max))
        c = lab.counts()
        assert c["positive"] + c["negative"] + c["dropout"] == len(anchors)
        assert not np.any(lab.positive & lab.dropout)
        assert c["positive"] >= prev_pos
        prev_pos = c["positive"]
        gx, gy = anchors.centers[lab.positive].T
        np.testing.assert_array_equal(lab.labels[lab.positive], bm_r.values[0, gy, gx])


def test_raising_iou_max_never_creates_positives(rng):
    spec = AnchorGridSpec(4, (8.0, 16.0), (1.0,))
    gts = [random_box(rng, 32, 32, min_size=6) for _ in range(2)]
    anchors, bm_r, _ = scene(gts, 32, 32, spec)
    low = assign_labels(anchors, gts, bm_r, ThresholdConfig(0.3, 0.5))
    high = assign_labels(anchors, gts, bm_r, ThresholdConfig(0.3, 0.7))
    assert not np.any(high.positive & ~low.positive)


def test_empty_gts_all_negative():
    anchors, _, _ = scene([BBox(0, 0, 4, 4)])
    lab = assign_labels(anchors, [], MapGrid.zeros(4, 4))
    assert np.all(lab.labels == 0.0) and not lab.positive.any()


def test_grid_mismatch():
    anchors, _, _ = scene([BBox(0, 0, 4, 4)])
    with pytest.raises(DimensionError):
        assign_labels(anchors, [], MapGrid.zeros(5, 4))


def test_force_positive_flag():
    # the only GT is tiny, so nothing reaches iou_max on its own
    spec = AnchorGridSpec(8, (16.0,), (1.0,))
    anchors = generate_anchors(spec, 32, 32)
    gt = BBox(3, 3, 7, 7)
    bm_r = stride_downsample(build_targets([gt], 32, 32)[2], 8)
    off = assign_labels(anchors, [gt], bm_r)
    on = assign_labels(anchors, [gt], bm_r, ThresholdConfig(force_positive=True))
    assert not off.positive.any()
    assert on.positive.sum() >= 1
    best = np.argmax(on.ious)
    assert on.positive[best]


def test_sample_all_dropout():
    assert len(sample_minibatch(np.full(50, -1.0), 16, 0.5, seed=1)) == 0


def test_sample_cap_arithmetic(rng):
    labels = np.zeros(1010)
    labels[rng.choice(1010, 10, replace=False)] = rng.uniform(0.5, 1.0, 10)
    idx = sample_minibatch(labels, 256, 0.5, seed=3)
    assert np.sum(labels[idx] > 0) == 10
    assert np.sum(labels[idx] == 0) == 246
    assert len(set(idx.tolist())) == 256


def test_sample_caps_positives_and_skips_dropout(rng):
    labels = np.concatenate([np.full(300, 0.9), np.zeros(300), np.full(300, -1.0)])
    idx = sample_minibatch(labels, 256, 0.25, seed=0)
    assert np.sum(labels[idx] > 0) == 64
    assert np.sum(labels[idx] == 0) == 192
    assert not np.any(labels[idx] == -1.0)


def test_sample_deterministic():
    labels = np.random.default_rng(0).choice([-1.0, 0.0, 0.7], 500)
    a = sample_minibatch(labels, 64, 0.5, seed=11)
    b = sample_minibatch(labels, 64, 0.5, seed=11)
    np.testing.assert_array_equal(a, b)


def test_sample_accepts_label_vector():
    lab = AnchorLabelVector(np.array([0.0, 0.5, -1.0]), np.zeros(3), np.array([False, True, False]))
    assert sorted(sample_minibatch(lab, 10, 0.5).tolist()) == [0, 1]


def test_sample_validation():
    with pytest.raises(ValueError):
        sample_minibatch(np.zeros(3), 0)
    with pytest.raises(ValueError):
        sample_minibatch(np.zeros(3), 4, 1.0)
