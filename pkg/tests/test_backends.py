"""Bit-equality of the compiled kernels against the NumPy reference."""

import numpy as np
import pytest

from fusedet.backend import _reference

_kernels = pytest.importorskip(
    "fusedet.backend._kernels", reason="compiled backend not built"
)


def random_boxes(rng, n, span=50.0):
    out = np.empty((n, 4))
    out[:, 0] = rng.uniform(-5, span, n)
    out[:, 1] = rng.uniform(-5, span, n)
    out[:, 2] = rng.uniform(0.5, 25, n)
    out[:, 3] = rng.uniform(0.5, 25, n)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def test_pairwise_ops_identical(rng):
    for _ in range(20):
        a = random_boxes(rng, int(rng.integers(0, 40)))
        b = random_boxes(rng, int(rng.integers(0, 40)))
        assert np.array_equal(
            _kernels.pairwise_intersection(a, b), _reference.pairwise_intersection(a, b)
        )
        assert np.array_equal(_kernels.pairwise_iou(a, b), _reference.pairwise_iou(a, b))


def test_max_overlap_identical(rng):
    for _ in range(20):
        a = random_boxes(rng, int(rng.integers(1, 30)))
        b = random_boxes(rng, int(rng.integers(0, 30)))
        rc, ic = _kernels.max_overlap_over_first(a, b)
        rr, ir = _reference.max_overlap_over_first(a, b)
        assert np.array_equal(rc, rr)
        assert np.array_equal(ic, ir)


def test_greedy_match_identical(rng):
    for _ in range(40):
        dets = random_boxes(rng, int(rng.integers(0, 25)))
        gts = random_boxes(rng, int(rng.integers(0, 12)))
        ignored = rng.random(len(gts)) < 0.3
        got = _kernels.greedy_match(dets, gts, ignored, 0.5)
        want = _reference.greedy_match(dets, gts, ignored, 0.5)
        for g, w in zip(got, want):
            assert np.array_equal(g, w)


def test_mask_ops_identical(rng):
    mask = (rng.random((60, 80)) > 0.6).astype(np.uint8)
    boxes = random_boxes(rng, 50, span=70.0)
    assert np.array_equal(
        _kernels.mask_box_fraction(mask, boxes), _reference.mask_box_fraction(mask, boxes)
    )
    for box in boxes[:20]:
        assert np.array_equal(
            _kernels.crop_resample(mask, box, 16, 8),
            _reference.crop_resample(mask, box, 16, 8),
        )


def test_verdict_codes_agree():
    assert (_kernels.FP, _kernels.TP, _kernels.IGNORED) == (
        _reference.FP,
        _reference.TP,
        _reference.IGNORED,
    )
