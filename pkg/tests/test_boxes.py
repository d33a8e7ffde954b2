import itertools

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from libra_balance.boxes import AssignConfig, Box2D, Label, assign, iou, iou_matrix


def test_iou_identical():
    b = Box2D(1, 2, 5, 9)
    assert iou(b, b) == 1.0


def test_iou_disjoint():
    assert iou(Box2D(0, 0, 1, 1), Box2D(2, 2, 3, 3)) == 0.0


def test_iou_half_shift():
    # intersection 5x10 = 50, union 100 + 100 - 50 = 150
    assert iou(Box2D(0, 0, 10, 10), Box2D(5, 0, 15, 10)) == pytest.approx(1 / 3, abs=1e-15)


def test_zero_area_boxes():
    point = Box2D(3, 3, 3, 3)
    assert iou(point, point) == 0.0
    assert iou(point, Box2D(0, 0, 10, 10)) == 0.0


def test_box_validation():
    with pytest.raises(ValueError):
        Box2D(5, 0, 1, 1)
    with pytest.raises(ValueError):
        Box2D(0, 0, float("nan"), 1)


def test_assign_config_validation():
    with pytest.raises(ValueError):
        AssignConfig(pos_iou_threshold=0.4, neg_iou_threshold=0.5)
    with pytest.raises(ValueError):
        AssignConfig(pos_iou_threshold=0.0, neg_iou_threshold=0.0)


def test_assign_exact_match_is_positive():
    gt = Box2D(10, 10, 50, 50)
    (c,) = assign([gt], [gt], AssignConfig(0.5, 0.5))
    assert c.label == Label.POSITIVE and c.iou == 1.0 and c.gt_index == 0


def test_assign_without_ground_truths():
    out = assign([Box2D(0, 0, 1, 1), Box2D(1, 1, 4, 4)], [])
    assert all(c.label == Label.NEGATIVE and c.iou == 0.0 and c.gt_index is None for c in out)


def test_assign_matches_brute_force():
    gts = [Box2D(0, 0, 10, 10), Box2D(20, 0, 30, 10)]
    cands = [Box2D(1, 0, 11, 10), Box2D(16, 0, 26, 10), Box2D(5, 0, 25, 10)]
    cfg = AssignConfig(pos_iou_threshold=0.6, neg_iou_threshold=0.3)
    out = assign(cands, gts, cfg)
    for cand, got in zip(cands, out):
        best, best_j = -1.0, None
        for j, g in enumerate(gts):
            v = iou(cand, g)
            if v > best:
                best, best_j = v, j
        if best >= 0.6:
            label = Label.POSITIVE
        elif best < 0.3:
            label = Label.NEGATIVE
        else:
            label = Label.IGNORED
        assert got.gt_index == best_j
        assert got.iou == pytest.approx(best, abs=1e-15)
        assert got.label == label
    assert [c.label for c in out] == [Label.POSITIVE, Label.IGNORED, Label.NEGATIVE]


def test_assign_tie_goes_to_lowest_index():
    gts = [Box2D(0, 0, 10, 10), Box2D(10, 0, 20, 10)]
    (c,) = assign([Box2D(5, 0, 15, 10)], gts)
    assert c.gt_index == 0


def test_iou_matrix_agrees_with_scalar():
    rng = np.random.default_rng(1)
    xy = rng.uniform(0, 50, (12, 2))
    wh = rng.uniform(0, 30, (12, 2))
    boxes = [Box2D(*p, *(p + s)) for p, s in zip(xy, wh)]
    m = iou_matrix(boxes, boxes)
    for i, j in itertools.product(range(12), repeat=2):
        assert m[i, j] == pytest.approx(iou(boxes[i], boxes[j]), abs=1e-15)


coord = st.floats(-1e4, 1e4, allow_nan=False)
extent = st.floats(0, 1e4, allow_nan=False)
boxes = st.builds(lambda x, y, w, h: Box2D(x, y, x + w, y + h), coord, coord, extent, extent)


@settings(max_examples=200)
@given(a=boxes, b=boxes)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0


@settings(max_examples=200)
@given(a=boxes)
def test_self_iou_is_one(a):
    assume(a.area > 0)
    assert iou(a, a) == 1.0


@settings(max_examples=200)
@given(a=boxes, b=boxes, k=st.floats(1e-3, 1e3))
def test_iou_scale_invariant(a, b, k):
    assume(a.area > 1e-6 and b.area > 1e-6)
    assert abs(iou(a.scaled(k), b.scaled(k)) - iou(a, b)) <= 1e-12


@settings(max_examples=100)
@given(
    cands=st.lists(boxes, min_size=1, max_size=15),
    gts=st.lists(boxes, max_size=4),
    neg=st.floats(0, 1),
    pos=st.floats(0.01, 1),
)
def test_assign_partition(cands, gts, neg, pos):
    cfg = AssignConfig(max(neg, pos), min(neg, pos))
    out = assign(cands, gts, cfg)
    assert len(out) == len(cands)
    if not gts:
        assert all(c.label == Label.NEGATIVE and c.iou == 0.0 for c in out)
        return
    for c in out:
        assert c.label in (Label.POSITIVE, Label.NEGATIVE, Label.IGNORED)
        if c.label == Label.POSITIVE:
            assert c.iou >= cfg.pos_iou_threshold and c.gt_index is not None
        elif c.label == Label.NEGATIVE:
            assert c.iou < cfg.neg_iou_threshold
        else:
            assert cfg.neg_iou_threshold <= c.iou < cfg.pos_iou_threshold
