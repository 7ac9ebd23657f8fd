"""Axis-aligned box arithmetic shared by matching, labeling, and evaluation.

Boxes are (x, y, w, h) in pixels with y growing downward, continuous
coordinates, no +1 pixel convention.  Validation (positive extents, score
range) happens once at ingest, so these functions assume valid input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fusedet import backend


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    @property
    def right(self) -> float:
        return self.x + self.w

    @property
    def bottom(self) -> float:
        return self.y + self.h

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h], dtype=np.float64)


@dataclass
class Detection:
    """A scored candidate box attached to an image."""

    box: BoundingBox
    score: float
    id: str = ""
    image_id: str = ""
    class_id: int = 1
    source: str = ""


def boxes_to_array(boxes) -> np.ndarray:
    """Stack BoundingBox values into an (n, 4) float64 array."""
    if len(boxes) == 0:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([(b.x, b.y, b.w, b.h) for b in boxes], dtype=np.float64)


def area(b: BoundingBox) -> float:
    return b.w * b.h


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.right, b.right) - max(a.x, b.x)
    ih = min(a.bottom, b.bottom) - max(a.y, b.y)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return iw * ih


def jaccard(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; symmetric, in [0, 1]."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (area(a) + area(b) - inter)


def overlap_over_detection(det: BoundingBox, gt: BoundingBox) -> float:
    """Intersection divided by the detection's own area (asymmetric)."""
    return intersection_area(det, gt) / area(det)


def max_overlap_over_detection(det: BoundingBox, gts) -> tuple[float, int | None]:
    """Largest overlap-over-detection ratio against a gt list.

    Returns (ratio, index of the best gt), or (0.0, None) when there are
    no gts or nothing overlaps.  Ties go to the lowest gt index.
    """
    ratios, idx = backend.max_overlap_over_first(
        det.as_array().reshape(1, 4), boxes_to_array(gts)
    )
    if idx[0] < 0 or ratios[0] <= 0.0:
        return 0.0, None
    return float(ratios[0]), int(idx[0])
