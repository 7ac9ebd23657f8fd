# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of the NumPy reference backend.

Semantics and per-element arithmetic order must stay identical to
``fusedet.backend._reference`` -- the test suite asserts bit equality.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor

FP, TP, IGNORED = 0, 1, 2


cdef inline double _dmax(double a, double b) nogil:
    return a if a > b else b


cdef inline double _dmin(double a, double b) nogil:
    return a if a < b else b


def _as_boxes(boxes):
    return np.ascontiguousarray(np.asarray(boxes, dtype=np.float64).reshape(-1, 4))


def pairwise_intersection(a, b):
    """Intersection areas for every (a_i, b_j) pair, shape (n, m)."""
    cdef double[:, ::1] av = _as_boxes(a)
    cdef double[:, ::1] bv = _as_boxes(b)
    cdef Py_ssize_t n = av.shape[0], m = bv.shape[0], i, j
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef double ix, iy, ix2, iy2, iw, ih
    for i in range(n):
        for j in range(m):
            ix = _dmax(av[i, 0], bv[j, 0])
            iy = _dmax(av[i, 1], bv[j, 1])
            ix2 = _dmin(av[i, 0] + av[i, 2], bv[j, 0] + bv[j, 2])
            iy2 = _dmin(av[i, 1] + av[i, 3], bv[j, 1] + bv[j, 3])
            iw = _dmax(ix2 - ix, 0.0)
            ih = _dmax(iy2 - iy, 0.0)
            ov[i, j] = iw * ih
    return out


def pairwise_iou(a, b):
    """Jaccard overlap for every (a_i, b_j) pair, shape (n, m)."""
    cdef double[:, ::1] av = _as_boxes(a)
    cdef double[:, ::1] bv = _as_boxes(b)
    cdef Py_ssize_t n = av.shape[0], m = bv.shape[0], i, j
    inter = pairwise_intersection(av, bv)
    cdef double[:, ::1] iv = inter
    out = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef double area_a, union
    for i in range(n):
        area_a = av[i, 2] * av[i, 3]
        for j in range(m):
            if iv[i, j] > 0.0:
                union = area_a + bv[j, 2] * bv[j, 3] - iv[i, j]
                ov[i, j] = iv[i, j] / union
    return out


def max_overlap_over_first(a, b):
    """Best intersection/area(a_i) ratio against b, with the argmax index."""
    cdef double[:, ::1] av = _as_boxes(a)
    cdef double[:, ::1] bv = _as_boxes(b)
    cdef Py_ssize_t n = av.shape[0], m = bv.shape[0], i, j
    ratios = np.zeros(n, dtype=np.float64)
    indices = np.full(n, -1, dtype=np.int64)
    if m == 0:
        return ratios, indices
    inter = pairwise_intersection(av, bv)
    cdef double[:, ::1] iv = inter
    cdef double[::1] rv = ratios
    cdef cnp.int64_t[::1] xv = indices
    cdef double area_a, r, best
    cdef Py_ssize_t best_j
    for i in range(n):
        area_a = av[i, 2] * av[i, 3]
        best = -1.0
        best_j = 0
        for j in range(m):
            r = iv[i, j] / area_a
            if r > best:
                best = r
                best_j = j
        rv[i] = best
        xv[i] = best_j
    return ratios, indices


def greedy_match(det_boxes, gt_boxes, gt_ignored, double iou_threshold):
    """Greedy detection-to-ground-truth assignment for one image.

    Same contract as the reference backend: detections pre-sorted by
    descending score, evaluated gts consumed at most once, ignored gts
    matchable repeatedly, IoU ties to the lowest gt index.
    """
    cdef double[:, ::1] dv = _as_boxes(det_boxes)
    cdef double[:, ::1] gv = _as_boxes(gt_boxes)
    ign = np.ascontiguousarray(np.asarray(gt_ignored, dtype=np.uint8).reshape(-1))
    cdef cnp.uint8_t[::1] ignv = ign
    cdef Py_ssize_t n = dv.shape[0], g = gv.shape[0], i, j
    verdicts = np.zeros(n, dtype=np.int8)
    det_gt = np.full(n, -1, dtype=np.int64)
    gt_det = np.full(g, -1, dtype=np.int64)
    if g == 0:
        return verdicts, det_gt, gt_det
    iou = pairwise_iou(dv, gv)
    cdef double[:, ::1] iv = iou
    cdef cnp.int8_t[::1] vv = verdicts
    cdef cnp.int64_t[::1] dgv = det_gt
    cdef cnp.int64_t[::1] gdv = gt_det
    taken = np.zeros(g, dtype=np.uint8)
    cdef cnp.uint8_t[::1] tv = taken
    cdef double v, best, best_ign
    cdef Py_ssize_t best_j, best_ign_j
    for i in range(n):
        best = -1.0
        best_j = -1
        best_ign = -1.0
        best_ign_j = -1
        for j in range(g):
            v = iv[i, j]
            if v < iou_threshold:
                continue
            if ignv[j]:
                if v > best_ign:
                    best_ign = v
                    best_ign_j = j
            elif not tv[j] and v > best:
                best = v
                best_j = j
        if best_j >= 0:
            vv[i] = 1  # TP
            dgv[i] = best_j
            gdv[best_j] = i
            tv[best_j] = 1
        elif best_ign_j >= 0:
            vv[i] = 2  # IGNORED
            dgv[i] = best_ign_j
    return verdicts, det_gt, gt_det


def mask_box_fraction(mask, boxes):
    """Foreground fraction of each box raster; out-of-image cells count
    toward the denominator as background."""
    m8 = np.ascontiguousarray(np.asarray(mask), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] mv = m8
    cdef double[:, ::1] bv = _as_boxes(boxes)
    cdef Py_ssize_t n = bv.shape[0], h = mv.shape[0], w = mv.shape[1]
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, r, c, c0, c1, r0, r1, cc0, cc1, rr0, rr1
    cdef long total, fg
    for i in range(n):
        c0 = <Py_ssize_t>ceil(bv[i, 0] - 0.5)
        c1 = <Py_ssize_t>ceil(bv[i, 0] + bv[i, 2] - 0.5)
        r0 = <Py_ssize_t>ceil(bv[i, 1] - 0.5)
        r1 = <Py_ssize_t>ceil(bv[i, 1] + bv[i, 3] - 0.5)
        total = (c1 - c0) * (r1 - r0)
        if total <= 0:
            continue
        cc0 = c0 if c0 > 0 else 0
        cc1 = c1 if c1 < w else w
        rr0 = r0 if r0 > 0 else 0
        rr1 = r1 if r1 < h else h
        fg = 0
        for r in range(rr0, rr1):
            for c in range(cc0, cc1):
                if mv[r, c]:
                    fg += 1
        ov[i] = <double>fg / <double>total
    return out


def crop_resample(mask, box, Py_ssize_t rows, Py_ssize_t cols):
    """Nearest-neighbor resample of the mask under a box to rows x cols."""
    m8 = np.ascontiguousarray(np.asarray(mask), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] mv = m8
    b = np.asarray(box, dtype=np.float64).reshape(4)
    cdef double x = b[0], y = b[1], w = b[2], h = b[3]
    cdef Py_ssize_t img_h = mv.shape[0], img_w = mv.shape[1], i, j, src_r, src_c
    out = np.zeros((rows, cols), dtype=np.float64)
    cdef double[:, ::1] ov = out
    for i in range(rows):
        src_r = <Py_ssize_t>floor(y + (i + 0.5) * h / rows)
        if src_r < 0 or src_r >= img_h:
            continue
        for j in range(cols):
            src_c = <Py_ssize_t>floor(x + (j + 0.5) * w / cols)
            if 0 <= src_c < img_w and mv[src_r, src_c]:
                ov[i, j] = 1.0
    return out
