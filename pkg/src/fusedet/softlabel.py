"""Floating-point candidate labels and the cross-entropy objective.

Hard labels threshold the overlap ratio; here the label interpolates
linearly across an overlap band [th_a, th_b] instead, saturating to 0
below and 1 above, so a candidate sitting near the decision boundary
contributes to both classes.  The ratio is intersection over the
candidate's own area against its single best-overlapping ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fusedet.geometry import BoundingBox, Detection, max_overlap_over_detection

PROB_CLAMP = 1e-12  # applied before log; log(0) is never taken


@dataclass(frozen=True)
class SoftLabel:
    label_ped: float
    label_bg: float

    def __post_init__(self):
        if not (0.0 <= self.label_ped <= 1.0 and 0.0 <= self.label_bg <= 1.0):
            raise ValueError("label components must lie in [0, 1]")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.label_ped, self.label_bg], dtype=np.float64)

    @staticmethod
    def pedestrian(value: float) -> "SoftLabel":
        return SoftLabel(value, 1.0 - value)


@dataclass(frozen=True)
class LabelThresholds:
    th_a: float
    th_b: float

    def __post_init__(self):
        if not 0.0 <= self.th_a < self.th_b <= 1.0:
            raise ValueError("thresholds must satisfy 0 <= th_a < th_b <= 1")


@dataclass
class LabeledCandidate:
    detection: Detection
    label: SoftLabel
    matched_gt: int | None = None


def soft_label_from_ratio(r: float, thr: LabelThresholds) -> SoftLabel:
    """Map an overlap ratio to a label: 1 above th_b, 0 below th_a, linear
    in between.  Continuous and non-decreasing in r."""
    if r > thr.th_b:
        ped = 1.0
    elif r < thr.th_a:
        ped = 0.0
    else:
        ped = (r - thr.th_a) / (thr.th_b - thr.th_a)
    return SoftLabel.pedestrian(ped)


def assign_soft_label(det: Detection, gts: list[BoundingBox], thr: LabelThresholds) -> SoftLabel:
    """Label a candidate from its largest overlap-over-detection ratio
    against the gt list (0 when the list is empty)."""
    r, _ = max_overlap_over_detection(det.box, gts)
    return soft_label_from_ratio(r, thr)


def _label_vector(label) -> np.ndarray:
    if isinstance(label, SoftLabel):
        return label.vector
    return np.asarray(label, dtype=np.float64)


def cross_entropy(label, probs) -> float:
    """-sum(l_i * log(y_i)) with probabilities clamped to [1e-12, 1]."""
    l = _label_vector(label)
    y = np.asarray(probs, dtype=np.float64)
    if l.shape != y.shape:
        raise ValueError(f"label has {l.shape[0]} classes, probs {y.shape}")
    if abs(float(y.sum()) - 1.0) > 1e-9:
        raise ValueError("probabilities must sum to 1")
    return float(-(l * np.log(np.clip(y, PROB_CLAMP, 1.0))).sum())


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_gradient(label, logits) -> np.ndarray:
    """Gradient of the cross entropy w.r.t. the logits: softmax(z) - l.

    Holds for any label vector summing to 1; the components of the result
    sum to 0.
    """
    l = _label_vector(label)
    z = np.asarray(logits, dtype=np.float64)
    if l.shape != z.shape:
        raise ValueError(f"label has {l.shape[0]} classes, logits {z.shape}")
    return softmax(z) - l


def build_training_set(
    candidates: list[Detection],
    gts: dict[str, list[BoundingBox]],
    thr: LabelThresholds,
    min_score: float = 0.01,
    min_height: float = 40.0,
) -> list[LabeledCandidate]:
    """Select and label classifier training samples.

    Keeps candidates with score > min_score and box height > min_height
    (strict, matching the stock 0.01 / 40 px cut) and labels each against
    its image's ground truths.  Every ground-truth box is also injected as
    a unit-label sample, bypassing the filters.
    """
    out: list[LabeledCandidate] = []
    for det in candidates:
        if det.score <= min_score or det.box.h <= min_height:
            continue
        image_gts = gts.get(det.image_id, [])
        r, best = max_overlap_over_detection(det.box, image_gts)
        out.append(LabeledCandidate(det, soft_label_from_ratio(r, thr), best))
    for image_id in gts:
        for j, box in enumerate(gts[image_id]):
            det = Detection(
                box=box,
                score=1.0,
                id=f"gt:{image_id}:{j}",
                image_id=image_id,
                source="ground-truth",
            )
            out.append(LabeledCandidate(det, SoftLabel.pedestrian(1.0), j))
    return out
