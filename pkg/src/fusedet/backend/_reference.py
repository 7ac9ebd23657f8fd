"""NumPy reference implementation of the hot kernels.

This is the fallback used when the compiled extension is unavailable and
the ground truth the extension is tested against.  Per-element arithmetic
is kept in the exact same order as the Cython code so both backends
produce bit-identical results.

Box arrays are float64 of shape (n, 4) laid out as (x, y, w, h) with y
growing downward.  Masks are uint8 rasters, nonzero = foreground.
"""

from __future__ import annotations

import numpy as np

# detection verdict codes shared by both backends
FP, TP, IGNORED = 0, 1, 2


def pairwise_intersection(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Intersection areas for every (a_i, b_j) pair, shape (n, m)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ix = np.maximum(a[:, None, 0], b[None, :, 0])
    iy = np.maximum(a[:, None, 1], b[None, :, 1])
    ix2 = np.minimum(a[:, None, 0] + a[:, None, 2], b[None, :, 0] + b[None, :, 2])
    iy2 = np.minimum(a[:, None, 1] + a[:, None, 3], b[None, :, 1] + b[None, :, 3])
    iw = np.maximum(ix2 - ix, 0.0)
    ih = np.maximum(iy2 - iy, 0.0)
    return iw * ih


def pairwise_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Jaccard overlap for every (a_i, b_j) pair, shape (n, m)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    inter = pairwise_intersection(a, b)
    area_a = a[:, 2] * a[:, 3]
    area_b = b[:, 2] * b[:, 3]
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=inter > 0.0)
    return out


def max_overlap_over_first(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Best intersection/area(a_i) ratio against b, with the argmax index.

    Returns (ratios, indices); indices are -1 when b is empty.  Ties go to
    the lowest b index.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    n, m = a.shape[0], b.shape[0]
    if m == 0:
        return np.zeros(n), np.full(n, -1, dtype=np.int64)
    ratios = pairwise_intersection(a, b) / (a[:, 2] * a[:, 3])[:, None]
    idx = np.argmax(ratios, axis=1).astype(np.int64)
    return ratios[np.arange(n), idx], idx


def greedy_match(
    det_boxes: np.ndarray,
    gt_boxes: np.ndarray,
    gt_ignored: np.ndarray,
    iou_threshold: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Greedy detection-to-ground-truth assignment for one image.

    Detections must already be sorted by descending score.  Each detection
    takes the highest-IoU unmatched evaluated gt at or above the threshold
    (verdict TP, consuming the gt); failing that, the highest-IoU ignored
    gt at or above the threshold (verdict IGNORED, gt not consumed);
    failing that it is a FP.  IoU ties go to the lowest gt index.

    Returns (verdicts int8 (n,), det_gt int64 (n,), gt_det int64 (g,));
    unmatched slots hold -1.
    """
    det_boxes = np.asarray(det_boxes, dtype=np.float64).reshape(-1, 4)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    gt_ignored = np.asarray(gt_ignored, dtype=bool).reshape(-1)
    n, g = det_boxes.shape[0], gt_boxes.shape[0]
    verdicts = np.zeros(n, dtype=np.int8)
    det_gt = np.full(n, -1, dtype=np.int64)
    gt_det = np.full(g, -1, dtype=np.int64)
    if g == 0:
        return verdicts, det_gt, gt_det
    iou = pairwise_iou(det_boxes, gt_boxes)
    taken = np.zeros(g, dtype=bool)
    for i in range(n):
        best_j = -1
        best = -1.0
        best_ign_j = -1
        best_ign = -1.0
        row = iou[i]
        for j in range(g):
            v = row[j]
            if v < iou_threshold:
                continue
            if gt_ignored[j]:
                if v > best_ign:
                    best_ign = v
                    best_ign_j = j
            elif not taken[j] and v > best:
                best = v
                best_j = j
        if best_j >= 0:
            verdicts[i] = TP
            det_gt[i] = best_j
            gt_det[best_j] = i
            taken[best_j] = True
        elif best_ign_j >= 0:
            verdicts[i] = IGNORED
            det_gt[i] = best_ign_j
    return verdicts, det_gt, gt_det


def _raster_bounds(lo: float, extent: float) -> tuple[int, int]:
    # pixel index p is covered iff lo <= p + 0.5 < lo + extent
    start = int(np.ceil(lo - 0.5))
    stop = int(np.ceil(lo + extent - 0.5))
    return start, stop


def mask_box_fraction(mask: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Foreground fraction of each box raster; cells outside the image
    count toward the denominator as background."""
    mask = np.asarray(mask)
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    h, w = mask.shape
    out = np.zeros(boxes.shape[0])
    for i, (x, y, bw, bh) in enumerate(boxes):
        c0, c1 = _raster_bounds(x, bw)
        r0, r1 = _raster_bounds(y, bh)
        total = (c1 - c0) * (r1 - r0)
        if total <= 0:
            continue
        cc0, cc1 = max(c0, 0), min(c1, w)
        rr0, rr1 = max(r0, 0), min(r1, h)
        fg = 0
        if cc1 > cc0 and rr1 > rr0:
            fg = int(np.count_nonzero(mask[rr0:rr1, cc0:cc1]))
        out[i] = fg / total
    return out


def crop_resample(mask: np.ndarray, box: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Nearest-neighbor resample of the mask under a box to rows x cols.

    Sample points sit at output cell centers; points outside the image are
    zero (crops past the border are zero-padded).
    """
    mask = np.asarray(mask)
    x, y, w, h = (float(v) for v in np.asarray(box, dtype=np.float64).reshape(4))
    img_h, img_w = mask.shape
    out = np.zeros((rows, cols))
    for i in range(rows):
        src_r = int(np.floor(y + (i + 0.5) * h / rows))
        if src_r < 0 or src_r >= img_h:
            continue
        for j in range(cols):
            src_c = int(np.floor(x + (j + 0.5) * w / cols))
            if 0 <= src_c < img_w and mask[src_r, src_c]:
                out[i, j] = 1.0
    return out
