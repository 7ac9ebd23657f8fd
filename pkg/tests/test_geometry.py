import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fusedet.geometry import (
    BoundingBox,
    area,
    intersection_area,
    jaccard,
    max_overlap_over_detection,
    overlap_over_detection,
)

from oracles import (
    raster_area,
    raster_intersection,
    raster_jaccard,
    raster_overlap_over_first,
)

# integer-valued boxes rasterize exactly on the unit grid
int_boxes = st.builds(
    BoundingBox,
    x=st.integers(-20, 20).map(float),
    y=st.integers(-20, 20).map(float),
    w=st.integers(1, 30).map(float),
    h=st.integers(1, 30).map(float),
)


def as_tuple(b):
    return (b.x, b.y, b.w, b.h)


class TestArea:
    def test_unit_examples(self):
        assert area(BoundingBox(0, 0, 10, 10)) == 100
        assert area(BoundingBox(5, 5, 1, 1)) == 1

    def test_subpixel_box_matches_raster_oracle(self):
        b = BoundingBox(0, 0, 2.5, 4)
        assert raster_area(as_tuple(b), res=0.5) == pytest.approx(10)
        assert area(b) == pytest.approx(10)


class TestIntersection:
    def test_self_intersection(self):
        b = BoundingBox(0, 0, 10, 10)
        assert intersection_area(b, b) == 100

    def test_disjoint(self):
        assert intersection_area(BoundingBox(0, 0, 10, 10), BoundingBox(10, 10, 5, 5)) == 0

    def test_half_overlap_matches_oracle(self):
        a, b = BoundingBox(0, 0, 10, 10), BoundingBox(5, 0, 10, 10)
        assert raster_intersection(as_tuple(a), as_tuple(b)) == 50
        assert intersection_area(a, b) == 50


class TestJaccard:
    def test_identity(self):
        b = BoundingBox(3, 4, 7, 2)
        assert jaccard(b, b) == 1.0

    def test_disjoint(self):
        assert jaccard(BoundingBox(0, 0, 10, 10), BoundingBox(50, 50, 10, 10)) == 0.0

    def test_third_overlap_matches_oracle(self):
        a, b = BoundingBox(0, 0, 10, 10), BoundingBox(5, 0, 10, 10)
        assert raster_jaccard(as_tuple(a), as_tuple(b)) == pytest.approx(1 / 3)
        assert jaccard(a, b) == pytest.approx(1 / 3, abs=1e-12)


class TestOverlapOverDetection:
    def test_equal_boxes(self):
        b = BoundingBox(0, 0, 10, 10)
        assert overlap_over_detection(b, b) == 1.0

    def test_disjoint(self):
        assert overlap_over_detection(BoundingBox(0, 0, 10, 10), BoundingBox(20, 0, 5, 5)) == 0.0

    def test_half_matches_oracle(self):
        det, gt = BoundingBox(0, 0, 10, 10), BoundingBox(0, 0, 5, 10)
        assert raster_overlap_over_first(as_tuple(det), as_tuple(gt)) == 0.5
        assert overlap_over_detection(det, gt) == 0.5

    def test_asymmetric(self):
        det, gt = BoundingBox(0, 0, 5, 10), BoundingBox(0, 0, 10, 10)
        assert overlap_over_detection(det, gt) == 1.0
        assert overlap_over_detection(gt, det) == 0.5


class TestMaxOverlap:
    def test_picks_best_gt(self):
        det = BoundingBox(0, 0, 10, 10)
        gts = [BoundingBox(8, 0, 10, 10), BoundingBox(1, 0, 10, 10)]
        r, idx = max_overlap_over_detection(det, gts)
        assert idx == 1
        assert r == pytest.approx(0.9)

    def test_empty_gts(self):
        assert max_overlap_over_detection(BoundingBox(0, 0, 1, 1), []) == (0.0, None)

    def test_tie_breaks_to_lowest_index(self):
        det = BoundingBox(0, 0, 10, 10)
        gts = [BoundingBox(0, 0, 10, 10), BoundingBox(0, 0, 10, 10)]
        assert max_overlap_over_detection(det, gts)[1] == 0


@given(int_boxes, int_boxes)
def test_jaccard_symmetric(a, b):
    assert jaccard(a, b) == jaccard(b, a)


@given(int_boxes, int_boxes)
def test_jaccard_bounded_by_overlap_ratios(a, b):
    j = jaccard(a, b)
    assert j <= overlap_over_detection(a, b) + 1e-12
    assert j <= overlap_over_detection(b, a) + 1e-12


@settings(max_examples=200)
@given(int_boxes, int_boxes)
def test_overlap_ops_match_raster_oracle(a, b):
    ta, tb = as_tuple(a), as_tuple(b)
    assert abs(area(a) - raster_area(ta)) < 1e-9
    assert abs(intersection_area(a, b) - raster_intersection(ta, tb)) < 1e-9
    assert abs(jaccard(a, b) - raster_jaccard(ta, tb)) < 1e-9
    assert abs(overlap_over_detection(a, b) - raster_overlap_over_first(ta, tb)) < 1e-9


@given(int_boxes, int_boxes)
def test_jaccard_range(a, b):
    assert 0.0 <= jaccard(a, b) <= 1.0


def test_box_accessors():
    b = BoundingBox(2, 3, 4, 5)
    assert b.right == 6
    assert b.bottom == 8
    assert list(b.as_array()) == [2, 3, 4, 5]
    assert not math.isnan(area(b))
