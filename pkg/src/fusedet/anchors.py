"""Default-box generation over detector output grids, plus anchor labeling.

Each feature-map cell gets one box per (aspect ratio, relative height)
pair: height = relative_height * image_height, width = aspect * height,
centered on the cell.  An optional extra ratio carries its own height
list.  Boxes are emitted layer by layer, cells in row-major order, the
main cross product before the extra set, so counts stay auditable:

    total = sum(rows * cols) * (len(ratios) * len(heights) + len(extra_heights))
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fusedet import backend
from fusedet.geometry import BoundingBox, boxes_to_array

POSITIVE = "positive"
NEGATIVE = "negative"


@dataclass(frozen=True)
class FeatureMapSpec:
    name: str
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"layer {self.name!r}: grid must be at least 1x1")


@dataclass
class AnchorConfig:
    aspect_ratios: list[float]
    relative_heights: list[float]
    image_width: float
    image_height: float
    extra_ratio: float | None = None
    extra_relative_heights: list[float] = field(default_factory=list)
    clip: bool = False

    def __post_init__(self):
        ratios = list(self.aspect_ratios) + ([self.extra_ratio] if self.extra_ratio else [])
        if any(r <= 0 for r in ratios):
            raise ValueError("aspect ratios must be positive")
        heights = list(self.relative_heights) + list(self.extra_relative_heights)
        if any(not 0 < h <= 1 for h in heights):
            raise ValueError("relative heights must lie in (0, 1]")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image dimensions must be positive")

    def pairs(self) -> list[tuple[float, float]]:
        """(aspect, relative_height) pairs in emission order."""
        out = [(a, h) for a in self.aspect_ratios for h in self.relative_heights]
        if self.extra_ratio is not None:
            out += [(self.extra_ratio, h) for h in self.extra_relative_heights]
        return out


def pedestrian_anchor_config(image_width: float, image_height: float) -> AnchorConfig:
    """Stock pedestrian layout: six ratios crossed with seven relative
    heights, plus a seventh set at the mean pedestrian aspect 0.41."""
    return AnchorConfig(
        aspect_ratios=[0.1, 0.2, 0.41, 0.8, 1.6, 3.0],
        relative_heights=[0.05, 0.1, 0.24, 0.38, 0.52, 0.66, 0.80],
        extra_ratio=0.41,
        extra_relative_heights=[0.1, 0.24, 0.38, 0.52, 0.66, 0.80, 0.94],
        image_width=image_width,
        image_height=image_height,
    )


def generate_default_boxes(layers: list[FeatureMapSpec], cfg: AnchorConfig) -> list[BoundingBox]:
    """Tile default boxes over every layer grid.

    Boxes are unclipped by default and may extend past the image; with
    cfg.clip they are intersected with the image rectangle.
    """
    pairs = cfg.pairs()
    out: list[BoundingBox] = []
    for layer in layers:
        cell_w = cfg.image_width / layer.cols
        cell_h = cfg.image_height / layer.rows
        for r in range(layer.rows):
            cy = (r + 0.5) * cell_h
            for c in range(layer.cols):
                cx = (c + 0.5) * cell_w
                for aspect, rel_h in pairs:
                    h = rel_h * cfg.image_height
                    w = aspect * h
                    x, y = cx - w / 2.0, cy - h / 2.0
                    if cfg.clip:
                        x2 = min(x + w, cfg.image_width)
                        y2 = min(y + h, cfg.image_height)
                        x, y = max(x, 0.0), max(y, 0.0)
                        w, h = x2 - x, y2 - y
                    out.append(BoundingBox(x, y, w, h))
    return out


@dataclass(frozen=True)
class AnchorMatch:
    anchor_index: int
    label: str
    matched_gt: int | None
    max_jaccard: float


def match_anchors(
    anchors: list[BoundingBox],
    gts: list[BoundingBox],
    threshold: float = 0.5,
) -> list[AnchorMatch]:
    """Label each anchor positive iff its best Jaccard overlap with any gt
    exceeds the threshold (strict); ties go to the lowest gt index."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    if not anchors:
        return []
    if not gts:
        return [AnchorMatch(i, NEGATIVE, None, 0.0) for i in range(len(anchors))]
    iou = backend.pairwise_iou(boxes_to_array(anchors), boxes_to_array(gts))
    best = np.argmax(iou, axis=1)
    out = []
    for i, j in enumerate(best):
        v = float(iou[i, j])
        if v > threshold:
            out.append(AnchorMatch(i, POSITIVE, int(j), v))
        else:
            out.append(AnchorMatch(i, NEGATIVE, None, v))
    return out
