"""Fusing pixel-wise segmentation masks with detection scores.

Two rules are supported.  The kernel rule scores a detection by how much
its mask crop looks like a typical foreground silhouette: the crop is
resampled onto a fixed grid and weighted by a kernel (the normalized mean
crop over ground-truth boxes), then the detection score is multiplied by
that value.  The legacy rule only attenuates: candidates whose boxes are
less than an accept fraction foreground are scaled by
max(fraction * a_ss, b_ss).

Masks are binary rasters; crops extending past the border are treated as
background and resampling is nearest-neighbor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fusedet import backend
from fusedet.geometry import BoundingBox, Detection, boxes_to_array

KERNEL_ROWS, KERNEL_COLS = 64, 32  # ~0.5 aspect, close to a standing person


@dataclass
class SegMask:
    pixels: np.ndarray  # (height, width) uint8, 1 = foreground

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("mask must be a non-empty 2-D raster")
        self.pixels = (px != 0).astype(np.uint8)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class Kernel:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise ValueError("kernel must be a non-empty 2-D matrix")
        if np.any(w < 0.0):
            raise ValueError("kernel weights must be non-negative")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError("kernel weights must sum to 1")
        self.weights = w

    @property
    def rows(self) -> int:
        return self.weights.shape[0]

    @property
    def cols(self) -> int:
        return self.weights.shape[1]


def _require_intersects(box: BoundingBox, mask: SegMask) -> None:
    if box.x >= mask.width or box.right <= 0 or box.y >= mask.height or box.bottom <= 0:
        raise ValueError("box lies fully outside the image")


def estimate_kernel(
    gt_boxes,
    masks: dict[str, SegMask],
    size: tuple[int, int] = (KERNEL_ROWS, KERNEL_COLS),
) -> Kernel:
    """Mean resampled mask crop over ground-truth boxes, normalized to sum 1.

    gt_boxes is an iterable of (image_id, BoundingBox) pairs or of objects
    carrying .image_id and .box.  Raises on an empty list, a missing mask,
    or an all-background average.
    """
    rows, cols = size
    if rows < 1 or cols < 1:
        raise ValueError("kernel size must be at least 1x1")
    acc = np.zeros((rows, cols))
    count = 0
    for item in gt_boxes:
        image_id, box = item if isinstance(item, tuple) else (item.image_id, item.box)
        if image_id not in masks:
            raise ValueError(f"no mask for image {image_id!r}")
        acc += backend.crop_resample(masks[image_id].pixels, box.as_array(), rows, cols)
        count += 1
    if count == 0:
        raise ValueError("kernel estimation needs at least one ground-truth box")
    total = float(acc.sum())
    if total <= 0.0:
        raise ValueError("all crops are background; kernel cannot be normalized")
    return Kernel(acc / total)


def seg_score(box: BoundingBox, mask: SegMask, kernel: Kernel) -> float:
    """Kernel-weighted foreground content of the box, in [0, 1]."""
    _require_intersects(box, mask)
    crop = backend.crop_resample(mask.pixels, box.as_array(), kernel.rows, kernel.cols)
    return float((crop * kernel.weights).sum())


def fuse_seg(s: float, seg: float) -> float:
    """Detection score times the segmentation score."""
    return s * seg


def mask_overlap_fraction(box: BoundingBox, mask: SegMask) -> float:
    """Fraction of the box raster covered by foreground pixels."""
    _require_intersects(box, mask)
    return float(backend.mask_box_fraction(mask.pixels, box.as_array().reshape(1, 4))[0])


def legacy_seg_fuse(
    s: float,
    overlap_fraction: float,
    a_ss: float = 4.0,
    b_ss: float = 0.35,
    accept_threshold: float = 0.2,
) -> float:
    """Attenuation-only rule: scores pass unchanged above the accept
    fraction and are scaled by max(fraction * a_ss, b_ss) otherwise."""
    if overlap_fraction > accept_threshold:
        return s
    return s * max(overlap_fraction * a_ss, b_ss)


def suppress_ss_only(
    ss_detections: list[Detection], cg_detections: list[Detection]
) -> list[Detection]:
    """Drop segmentation-born detections that touch no candidate-generator
    detection (zero intersection with every one)."""
    if not ss_detections:
        return []
    if not cg_detections:
        return []
    inter = backend.pairwise_intersection(
        boxes_to_array([d.box for d in ss_detections]),
        boxes_to_array([d.box for d in cg_detections]),
    )
    keep = inter.max(axis=1) > 0.0
    return [d for d, k in zip(ss_detections, keep) if k]
