"""Miss-rate evaluation: matching, FPPI curves, and the log-average metric.

Matching is greedy per image in descending score order.  A detection
takes the best unmatched evaluated ground truth at or above the IoU
threshold (true positive), otherwise the best ignored one (neither true
nor false, and ignored boxes are never consumed), otherwise it counts as
a false positive.  Because assignments of higher-scored detections never
depend on lower-scored ones, one matching pass yields the verdicts for
every score threshold at once; the curve is that pass swept over the
distinct scores.

The summary metric is the geometric mean of the miss rate sampled at nine
FPPI reference points evenly log-spaced in [1e-2, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from fusedet import backend
from fusedet.geometry import BoundingBox, Detection, boxes_to_array

OCC_NONE = "none"
OCC_PARTIAL = "partial"  # up to 35% occluded
OCC_HEAVY = "heavy"  # 35% to 80%; beyond 80% is never evaluated

FPPI_REFERENCES = tuple(10.0 ** (-2.0 + 0.25 * k) for k in range(9))
MISS_RATE_CLAMP = 1e-6

TP, FP, IGNORED = "TP", "FP", "ignored"
MATCHED, MISSED = "matched", "missed"


@dataclass
class GroundTruth:
    box: BoundingBox
    image_id: str
    occlusion_fraction: float = 0.0
    ignore: bool = False
    class_id: int = 1
    truncation: float = 0.0


@dataclass(frozen=True)
class EvalSetting:
    """Which ground truths count: height in [min, max), occlusion bucket in
    the allowed set, truncation at most max_truncation."""

    name: str
    min_height: float = 0.0
    max_height: float | None = None
    occlusion_buckets: frozenset = frozenset({OCC_NONE, OCC_PARTIAL})
    max_truncation: float | None = None


def occlusion_bucket(fraction: float) -> str | None:
    if fraction == 0.0:
        return OCC_NONE
    if fraction <= 0.35:
        return OCC_PARTIAL
    if fraction <= 0.8:
        return OCC_HEAVY
    return None


SETTINGS: dict[str, EvalSetting] = {
    s.name: s
    for s in [
        EvalSetting("reasonable", min_height=50.0),
        EvalSetting("all", min_height=20.0, occlusion_buckets=frozenset({OCC_NONE, OCC_PARTIAL, OCC_HEAVY})),
        EvalSetting("far", min_height=20.0, max_height=30.0, occlusion_buckets=frozenset({OCC_NONE})),
        EvalSetting("medium", min_height=30.0, max_height=80.0, occlusion_buckets=frozenset({OCC_NONE})),
        EvalSetting("near", min_height=80.0, occlusion_buckets=frozenset({OCC_NONE})),
        EvalSetting("occ-none", min_height=50.0, occlusion_buckets=frozenset({OCC_NONE})),
        EvalSetting("occ-partial", min_height=50.0, occlusion_buckets=frozenset({OCC_PARTIAL})),
        EvalSetting("occ-heavy", min_height=50.0, occlusion_buckets=frozenset({OCC_HEAVY})),
        EvalSetting("kitti-easy", min_height=40.0, occlusion_buckets=frozenset({OCC_NONE}), max_truncation=0.15),
        EvalSetting("kitti-moderate", min_height=25.0, max_truncation=0.30),
        EvalSetting("kitti-hard", min_height=25.0, occlusion_buckets=frozenset({OCC_NONE, OCC_PARTIAL, OCC_HEAVY}), max_truncation=0.50),
    ]
}


def get_setting(name: str) -> EvalSetting:
    key = name.strip().lower()
    if key not in SETTINGS:
        raise KeyError(f"unknown evaluation setting {name!r}; known: {', '.join(SETTINGS)}")
    return SETTINGS[key]


def apply_setting(gts: list[GroundTruth], setting: EvalSetting) -> list[GroundTruth]:
    """Copy of the gts with out-of-setting boxes flagged ignore; boxes that
    were already ignored stay ignored."""
    out = []
    for gt in gts:
        keep = gt.box.h >= setting.min_height
        if setting.max_height is not None:
            keep = keep and gt.box.h < setting.max_height
        keep = keep and occlusion_bucket(gt.occlusion_fraction) in setting.occlusion_buckets
        if setting.max_truncation is not None:
            keep = keep and gt.truncation <= setting.max_truncation
        out.append(replace(gt, ignore=gt.ignore or not keep))
    return out


@dataclass
class ImageMatch:
    """Matching outcome for one image, in input order."""

    det_verdicts: list[str]
    det_matched_gt: list[int | None]
    gt_status: list[str]
    gt_matched_det: list[int | None]


def match_detections(
    dets: list[Detection], gts: list[GroundTruth], iou_threshold: float = 0.5
) -> ImageMatch:
    """Greedy score-ordered matching for a single image's records.

    Score ties are broken by input order.  Each evaluated gt is matched at
    most once; ignored gts absorb any number of detections.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    det_boxes = boxes_to_array([dets[i].box for i in order])
    gt_boxes = boxes_to_array([g.box for g in gts])
    ignored = np.array([g.ignore for g in gts], dtype=bool)
    verdicts, det_gt, gt_det = backend.greedy_match(det_boxes, gt_boxes, ignored, iou_threshold)

    names = {backend.FP: FP, backend.TP: TP, backend.IGNORED: IGNORED}
    det_verdicts = [""] * len(dets)
    det_matched: list[int | None] = [None] * len(dets)
    gt_matched: list[int | None] = [None] * len(gts)
    for pos, i in enumerate(order):
        det_verdicts[i] = names[int(verdicts[pos])]
        if det_gt[pos] >= 0:
            det_matched[i] = int(det_gt[pos])
    gt_status = []
    for j, g in enumerate(gts):
        if g.ignore:
            gt_status.append(IGNORED)
        elif gt_det[j] >= 0:
            gt_status.append(MATCHED)
            gt_matched[j] = order[int(gt_det[j])]
        else:
            gt_status.append(MISSED)
    return ImageMatch(det_verdicts, det_matched, gt_status, gt_matched)


@dataclass(frozen=True)
class CurvePoint:
    fppi: float
    miss_rate: float
    threshold: float


@dataclass
class EvalCurve:
    points: list[CurvePoint]

    def validate(self) -> None:
        for a, b in zip(self.points, self.points[1:]):
            if b.threshold >= a.threshold or b.fppi < a.fppi or b.miss_rate > a.miss_rate:
                raise ValueError("curve is not monotone in the sweep direction")


def _group_by_image(records, ids: list[str]):
    groups: dict[str, list] = {i: [] for i in ids}
    for r in records:
        groups.setdefault(r.image_id, []).append(r)
    return groups


def curve(
    dets: list[Detection],
    gts: list[GroundTruth],
    setting: EvalSetting | None = None,
    iou_threshold: float = 0.5,
    num_images: int | None = None,
) -> EvalCurve:
    """Miss-rate/FPPI operating points swept over the distinct detection
    scores, highest first, starting from the accept-nothing point.

    num_images defaults to the number of distinct image ids across both
    inputs; pass the real frame count when images can be empty.
    """
    if setting is not None:
        gts = apply_setting(gts, setting)
    image_ids: list[str] = []
    seen = set()
    for r in list(gts) + list(dets):
        if r.image_id not in seen:
            seen.add(r.image_id)
            image_ids.append(r.image_id)
    n_images = num_images if num_images is not None else len(image_ids)
    if n_images < 1:
        raise ValueError("evaluation needs at least one image")

    gt_groups = _group_by_image(gts, image_ids)
    det_groups = _group_by_image(dets, image_ids)

    fp_scores: list[float] = []
    matched_scores: list[float] = []
    total_evaluated = 0
    for image_id in image_ids:
        image_dets = det_groups.get(image_id, [])
        image_gts = gt_groups.get(image_id, [])
        m = match_detections(image_dets, image_gts, iou_threshold)
        for det, verdict in zip(image_dets, m.det_verdicts):
            if verdict == FP:
                fp_scores.append(det.score)
        for gt, status, det_idx in zip(image_gts, m.gt_status, m.gt_matched_det):
            if status == IGNORED:
                continue
            total_evaluated += 1
            if status == MATCHED:
                matched_scores.append(image_dets[det_idx].score)
    if total_evaluated == 0:
        raise ValueError("no evaluated ground truths; miss rate is undefined")

    fp_sorted = np.sort(np.asarray(fp_scores))
    match_sorted = np.sort(np.asarray(matched_scores))
    thresholds = sorted({d.score for d in dets}, reverse=True)
    points = [CurvePoint(0.0, 1.0, math.inf)]
    for t in thresholds:
        fp = fp_sorted.size - int(np.searchsorted(fp_sorted, t, side="left"))
        matched = match_sorted.size - int(np.searchsorted(match_sorted, t, side="left"))
        points.append(
            CurvePoint(fp / n_images, (total_evaluated - matched) / total_evaluated, t)
        )
    return EvalCurve(points)


def log_average_miss_rate(c: EvalCurve) -> float:
    """Geometric mean of the miss rate at the nine FPPI references.

    Each reference samples the curve point with the largest FPPI not
    exceeding it (the best reachable operating point); with no such point
    the miss rate counts as 1.  Samples are clamped to at least 1e-6
    before the logs are averaged.
    """
    samples = []
    for ref in FPPI_REFERENCES:
        miss = 1.0
        for p in c.points:
            if p.fppi <= ref:
                miss = p.miss_rate
            else:
                break
        samples.append(max(miss, MISS_RATE_CLAMP))
    return math.exp(sum(math.log(s) for s in samples) / len(samples))


def ablation_report(
    variants: dict[str, list[Detection]],
    gts: list[GroundTruth],
    settings: list[EvalSetting],
    iou_threshold: float = 0.5,
    num_images: int | None = None,
) -> dict[str, dict[str, float]]:
    """Log-average miss rate per (variant, setting) pair."""
    if not variants:
        raise ValueError("ablation needs at least one variant")
    return {
        name: {
            s.name: log_average_miss_rate(curve(dets, gts, s, iou_threshold, num_images))
            for s in settings
        }
        for name, dets in variants.items()
    }
