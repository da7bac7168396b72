import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bmlesion.errors import DimensionError
from bmlesion.geometry import (
    AnchorGridSpec,
    BBox,
    box_delta_decode,
    box_delta_encode,
    generate_anchors,
    iou,
    iou_matrix,
)

coord = st.floats(-100, 100, allow_nan=False)
extent = st.floats(0.01, 100, allow_nan=False)


@st.composite
def boxes(draw):
    x1, y1 = draw(coord), draw(coord)
    return BBox(x1, y1, x1 + draw(extent), y1 + draw(extent))


def test_bbox_rejects_degenerate():
    with pytest.raises(ValueError):
        BBox(0, 0, 0, 5)
    with pytest.raises(ValueError):
        BBox(0, 5, 3, 2)
    with pytest.raises(ValueError):
        BBox(0, 0, float("inf"), 1)
    with pytest.raises(ValueError):
        BBox(float("nan"), 0, 1, 1)


def test_bbox_center_and_size():
    b = BBox(2, 4, 6, 10)
    assert b.center() == (4.0, 7.0)
    assert (b.width, b.height, b.area) == (4.0, 6.0, 24.0)


@pytest.mark.parametrize(
    "a, b, expected",
    [
        ((0, 0, 10, 10), (0, 0, 10, 10), 1.0),
        ((0, 0, 10, 10), (5, 0, 15, 10), 1 / 3),
        ((0, 0, 10, 10), (20, 20, 30, 30), 0.0),
        ((0, 0, 10, 10), (10, 0, 20, 10), 0.0),
    ],
)
def test_iou_examples(a, b, expected):
    assert iou(BBox(*a), BBox(*b)) == pytest.approx(expected, abs=1e-15)


def _raster_iou(a, b, res=0.05):
    """Count 0.05-px cells whose centres fall in each box; boxes live on the 0.05 lattice."""
    lo = np.floor(min(a.x1, b.x1, a.y1, b.y1) / res) - 1
    hi = np.ceil(max(a.x2, b.x2, a.y2, b.y2) / res) + 1
    centers = (np.arange(lo, hi) + 0.5) * res
    xs, ys = centers[None, :], centers[:, None]

    def raster(box):
        return (xs >= box.x1) & (xs < box.x2) & (ys >= box.y1) & (ys < box.y2)

    ra, rb = raster(a), raster(b)
    return np.count_nonzero(ra & rb) / np.count_nonzero(ra | rb)


def test_iou_matches_supersampling_oracle(rng):
    for _ in range(200):
        # coordinates on the oracle's 0.05 px lattice so the raster count is exact
        q = rng.integers(0, 400, size=(2, 4)) / 20.0
        pairs = []
        for row in q:
            x1, x2 = sorted(row[[0, 2]])
            y1, y2 = sorted(row[[1, 3]])
            if x1 == x2:
                x2 += 0.05
            if y1 == y2:
                y2 += 0.05
            pairs.append(BBox(x1, y1, x2, y2))
        a, b = pairs
        assert abs(iou(a, b) - _raster_iou(a, b)) < 1e-3


@given(boxes(), boxes())
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0


@given(boxes())
def test_iou_self_is_one(a):
    assert iou(a, a) == 1.0


def test_iou_matrix_agrees_with_scalar(rng):
    a = []
    b = []
    for lst, n in ((a, 30), (b, 7)):
        for _ in range(n):
            x = np.sort(rng.uniform(0, 50, 2))
            y = np.sort(rng.uniform(0, 50, 2))
            lst.append(BBox(x[0], y[0], x[1] + 0.1, y[1] + 0.1))
    m = iou_matrix(np.array([t.as_tuple() for t in a]), np.array([t.as_tuple() for t in b]))
    for i, bi in enumerate(a):
        for j, bj in enumerate(b):
            assert m[i, j] == pytest.approx(iou(bi, bj), abs=1e-14)


def test_iou_matrix_empty():
    assert iou_matrix(np.zeros((0, 4)), np.array([[0, 0, 1, 1]])).shape == (0, 1)


def test_anchor_spec_validation():
    with pytest.raises(ValueError):
        AnchorGridSpec(stride=0)
    with pytest.raises(ValueError):
        AnchorGridSpec(scales=())
    with pytest.raises(ValueError):
        AnchorGridSpec(ratios=(1.0, -2.0))


def test_generate_anchors_small_grid():
    a = generate_anchors(AnchorGridSpec(8, (8.0,), (1.0,)), 16, 16)
    assert len(a) == 4
    centers = [b.center() for b in (a.box(i) for i in range(4))]
    assert centers == [(4, 4), (12, 4), (4, 12), (12, 12)]
    assert a.centers.tolist() == [[0, 0], [1, 0], [0, 1], [1, 1]]
    assert a.box(0) == BBox(0, 0, 8, 8)


def test_generate_anchors_count_default_spec():
    a = generate_anchors(AnchorGridSpec(8, (32, 64, 128), (0.5, 1, 2)), 800, 800)
    assert len(a) == 90000
    assert (a.grid_w, a.grid_h) == (100, 100)


def test_generate_anchor_shapes_and_order():
    spec = AnchorGridSpec(4, (8.0, 16.0), (0.5, 1.0, 2.0))
    a = generate_anchors(spec, 8, 12)
    assert len(a) == 2 * 3 * 2 * 3
    # gy-major, then gx, then scale, then ratio
    keys = list(zip(a.centers[:, 1], a.centers[:, 0], a.scale_idx, a.ratio_idx))
    assert keys == sorted(keys)
    w = a.boxes[:, 2] - a.boxes[:, 0]
    h = a.boxes[:, 3] - a.boxes[:, 1]
    scales = np.array(spec.scales)[a.scale_idx]
    ratios = np.array(spec.ratios)[a.ratio_idx]
    np.testing.assert_allclose(w, scales / np.sqrt(ratios), rtol=1e-15)
    np.testing.assert_allclose(h, scales * np.sqrt(ratios), rtol=1e-15)
    np.testing.assert_allclose(h / w, ratios, rtol=1e-14)


def test_border_anchors_are_not_clipped():
    a = generate_anchors(AnchorGridSpec(8, (32.0,), (1.0,)), 16, 16)
    assert a.box(0) == BBox(-12, -12, 20, 20)
    assert a.boxes.min() < 0 and a.boxes.max() > 16


def test_generate_anchors_rejects_unaligned_image():
    with pytest.raises(DimensionError):
        generate_anchors(AnchorGridSpec(8), 20, 16)


def test_generate_anchors_deterministic():
    spec = AnchorGridSpec()
    a, b = generate_anchors(spec, 64, 48), generate_anchors(spec, 64, 48)
    for name in ("boxes", "centers", "scale_idx", "ratio_idx"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()


def test_delta_examples():
    a = BBox(0, 0, 10, 10)
    assert box_delta_encode(a, a) == (0.0, 0.0, 0.0, 0.0)
    assert box_delta_encode(a, BBox(5, 5, 15, 15)) == (0.5, 0.5, 0.0, 0.0)
    assert box_delta_decode((0, 0, 0, 0), a) == a
    d = box_delta_decode((0, 0, math.log(2), math.log(2)), a)
    np.testing.assert_allclose(d.as_tuple(), (-5, -5, 15, 15), atol=1e-12)


def test_delta_roundtrip(rng):
    for _ in range(100):
        pair = []
        for _ in range(2):
            x = np.sort(rng.uniform(-50, 50, 2))
            y = np.sort(rng.uniform(-50, 50, 2))
            pair.append(BBox(x[0], y[0], x[1] + 0.5, y[1] + 0.5))
        anchor, gt = pair
        back = box_delta_decode(box_delta_encode(anchor, gt), anchor)
        scale = max(1.0, np.abs(gt.as_array()).max())
        np.testing.assert_allclose(back.as_array(), gt.as_array(), rtol=0, atol=1e-9 * scale)


def test_decode_rejects_nonfinite():
    with pytest.raises(ValueError):
        box_delta_decode((0, float("nan"), 0, 0), BBox(0, 0, 1, 1))
