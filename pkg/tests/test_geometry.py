import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipdkit import (
    AffineTransform2D,
    BBox,
    DegenerateSampleError,
    InputValidationError,
    Point2,
    apply_affine,
    compose,
    fit_affine_3pt,
    iou,
)
from ipdkit.geometry import DEGENERACY_RTOL, points_to_array, transform_points, triple_extent

from helpers import grid_iou, overlapping_box_pair


def test_bbox_validation():
    with pytest.raises(InputValidationError):
        BBox(0, 0, -1, 2)
    with pytest.raises(InputValidationError):
        BBox(0, 0, 1, 0)
    with pytest.raises(InputValidationError):
        BBox(0, 0, 1, 1, confidence=1.5)
    with pytest.raises(InputValidationError):
        BBox(math.nan, 0, 1, 1)


def test_bbox_coerces_numeric_types():
    b = BBox(np.float64(1.0), np.float32(2.0), np.int64(3), 4, confidence=np.float64(0.5))
    assert type(b.cx) is float and type(b.w) is float
    assert type(b.confidence) is float
    assert type(b.class_id) is int
    assert b == BBox(1.0, 2.0, 3.0, 4.0, confidence=0.5)


def test_bbox_corners_and_area():
    b = BBox(10, 20, 4, 6)
    assert b.corners() == (8, 17, 12, 23)
    assert b.area == 24


def test_iou_identical_is_one():
    b = BBox(3, 4, 5, 6)
    assert iou(b, b) == 1.0


def test_iou_disjoint_and_touching_are_zero():
    a = BBox(0, 0, 2, 2)
    assert iou(a, BBox(10, 10, 2, 2)) == 0.0
    # shared edge: zero intersection area
    assert iou(a, BBox(2, 0, 2, 2)) == 0.0
    # shared corner
    assert iou(a, BBox(2, 2, 2, 2)) == 0.0


def test_iou_known_values():
    # half-overlapping unit squares: inter 0.5, union 1.5
    a = BBox(0.0, 0.0, 1.0, 1.0)
    b = BBox(0.5, 0.0, 1.0, 1.0)
    assert iou(a, b) == pytest.approx(1.0 / 3.0)
    # nested box a quarter of the area
    outer = BBox(0, 0, 4, 4)
    inner = BBox(0, 0, 2, 2)
    assert iou(outer, inner) == pytest.approx(0.25)


def test_iou_symmetry_and_range_randomized():
    rng = np.random.default_rng(11)
    for _ in range(300):
        a, b = overlapping_box_pair(rng)
        v = iou(a, b)
        assert 0.0 <= v <= 1.0
        assert v == iou(b, a)


def test_iou_matches_grid_oracle():
    rng = np.random.default_rng(5)
    for _ in range(50):
        a, b = overlapping_box_pair(rng)
        assert iou(a, b) == pytest.approx(grid_iou(a, b), abs=5e-3)


def test_apply_affine_identity_and_translation():
    p = Point2(3.0, -2.0)
    assert apply_affine(AffineTransform2D.identity(), p) == p
    q = apply_affine(AffineTransform2D.translation(1.0, 2.0), p)
    assert (q.x, q.y) == (4.0, 0.0)


def test_compose_matches_sequential_application():
    rng = np.random.default_rng(3)
    for _ in range(50):
        t1 = AffineTransform2D.from_params(rng.uniform(-2, 2, 6))
        t2 = AffineTransform2D.from_params(rng.uniform(-2, 2, 6))
        p = Point2(*rng.uniform(-10, 10, 2))
        via_compose = apply_affine(compose(t2, t1), p)
        sequential = apply_affine(t2, apply_affine(t1, p))
        assert via_compose.x == pytest.approx(sequential.x, abs=1e-9)
        assert via_compose.y == pytest.approx(sequential.y, abs=1e-9)


def test_fit_affine_3pt_recovers_known_transform():
    t = AffineTransform2D(1.2, -0.3, 0.4, 0.9, 10.0, -5.0)
    src = [Point2(0, 0), Point2(7, 1), Point2(2, 9)]
    dst = [apply_affine(t, p) for p in src]
    got = fit_affine_3pt(src, dst)
    assert np.allclose(got.params(), t.params(), atol=1e-12)


def test_fit_affine_3pt_rejects_collinear():
    src = [Point2(0, 0), Point2(1, 1), Point2(2, 2)]
    dst = [Point2(0, 0), Point2(1, 0), Point2(2, 0)]
    with pytest.raises(DegenerateSampleError):
        fit_affine_3pt(src, dst)
    with pytest.raises(DegenerateSampleError):
        fit_affine_3pt([Point2(5, 5)] * 3, dst)


def test_fit_affine_3pt_wrong_arity():
    with pytest.raises(InputValidationError):
        fit_affine_3pt([Point2(0, 0)], [Point2(0, 0)])


def test_degeneracy_threshold_scales_with_extent():
    # same shape at 1000x the scale must behave the same way
    src_small = [Point2(0, 0), Point2(1e-3, 0), Point2(0, 1e-3)]
    src_big = [Point2(0, 0), Point2(1.0, 0), Point2(0, 1.0)]
    dst = [Point2(0, 0), Point2(1, 0), Point2(0, 1)]
    fit_affine_3pt(src_small, dst)
    fit_affine_3pt(src_big, dst)
    assert triple_extent(src_small) == pytest.approx(1e-3)


def test_points_roundtrip_and_validation():
    pts = [Point2(1, 2), Point2(3, 4)]
    arr = points_to_array(pts)
    assert arr.shape == (2, 2)
    assert points_to_array(np.zeros((0, 2))).shape == (0, 2)
    with pytest.raises(InputValidationError):
        points_to_array(np.array([[1.0, 2.0, 3.0]]))


def test_transform_points_matches_apply_affine():
    t = AffineTransform2D(0.5, 1.5, -2.0, 0.25, 3.0, 4.0)
    pts = np.array([[1.0, 2.0], [-3.0, 0.5]])
    moved = transform_points(t, pts)
    for row, p in zip(moved, pts):
        q = apply_affine(t, Point2(*p))
        assert row[0] == pytest.approx(q.x) and row[1] == pytest.approx(q.y)


coord = st.floats(min_value=-100, max_value=100, allow_nan=False)
side = st.floats(min_value=0.1, max_value=80, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(coord, coord, side, side, coord, coord, side, side)
def test_iou_bounds_property(cx1, cy1, w1, h1, cx2, cy2, w2, h2):
    a = BBox(cx1, cy1, w1, h1)
    b = BBox(cx2, cy2, w2, h2)
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert iou(b, a) == v
    # intersection can never exceed the smaller area's share of the union
    assert v <= min(a.area, b.area) / max(a.area, b.area) + 1e-12
