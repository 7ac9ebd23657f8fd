"""Deterministic synthetic corpus: ground truths, noisy candidate
detections, verifier opinions with planted reliabilities, and masks.

Everything is drawn from the package's xorshift64* stream so a seed fully
pins the corpus on any platform.  The draw order is part of the contract
(frozen regression values depend on it):

  per image:   gt count; per gt (height, x, y);
               per gt a recall Bernoulli, then (dx, dy) jitter gaussians
               and a score uniform when emitted;
               false-positive count (floor(rate) + Bernoulli(frac)),
               then per false box (height, x, y, score);
  afterwards:  per candidate in emission order, per classifier, one
               mode Bernoulli and one gaussian (two uniforms).

Opinion model: a classifier is in its correct mode with probability equal
to its reliability; the emitted probability is
clamp(target + gauss(0, 0.1), 0, 1) where target is the reliability for a
correctly judged true candidate, 1 - reliability for a correctly judged
false one, and the two swap in error mode.  Thresholding at 0.5 is then
accurate with probability ~ reliability, and reliability 0.5 is
uninformative.  A candidate counts as true when it overlaps a ground
truth with Jaccard above 0.5.

Masks are noise-free: each ground-truth box contributes a centered
foreground rectangle scaled so its area is mask_fidelity times the box
area.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fusedet._rng import Xorshift64Star
from fusedet.evaluation import GroundTruth
from fusedet.fusion import ClassifierOpinion
from fusedet.geometry import BoundingBox, Detection, boxes_to_array
from fusedet import backend
from fusedet.segfusion import SegMask

PEDESTRIAN_ASPECT = 0.41
TRUE_SCORE_RANGE = (0.3, 1.0)
FALSE_SCORE_RANGE = (0.01, 0.8)
HEIGHT_RANGE = (0.15, 0.5)  # relative to image height
OPINION_NOISE = 0.1
TRUTH_IOU = 0.5


@dataclass
class SynthConfig:
    seed: int = 0
    num_images: int = 0
    image_width: int = 640
    image_height: int = 480
    gts_min: int = 1
    gts_max: int = 3
    cg_recall: float = 0.95
    fp_rate: float = 3.0
    localization_noise: float = 2.0
    classifier_reliabilities: list[float] = field(default_factory=lambda: [0.9, 0.8])
    mask_fidelity: float = 1.0

    def __post_init__(self):
        if self.num_images < 0 or self.gts_min < 0 or self.gts_max < self.gts_min:
            raise ValueError("invalid corpus counts")
        if not 0.0 <= self.cg_recall <= 1.0:
            raise ValueError("cg_recall must lie in [0, 1]")
        if self.fp_rate < 0.0:
            raise ValueError("fp_rate must be >= 0")
        if any(not 0.5 <= r <= 1.0 for r in self.classifier_reliabilities):
            raise ValueError("reliabilities must lie in [0.5, 1]")
        if not 0.0 <= self.mask_fidelity <= 1.0:
            raise ValueError("mask_fidelity must lie in [0, 1]")


@dataclass
class SynthCorpus:
    gts: list[GroundTruth]
    cg_detections: list[Detection]
    opinions: list[ClassifierOpinion]
    masks: dict[str, SegMask]


def opinion_oracle(candidate: Detection, gts: list[BoundingBox], reliability: float, rng: Xorshift64Star) -> float:
    """Sample one simulated verifier probability for a candidate."""
    if not 0.5 <= reliability <= 1.0:
        raise ValueError("reliability must lie in [0.5, 1]")
    is_true = _is_true_candidate(candidate, gts)
    correct = rng.bernoulli(reliability)
    high = reliability if (is_true == correct) else 1.0 - reliability
    return min(max(high + rng.gauss(0.0, OPINION_NOISE), 0.0), 1.0)


def _is_true_candidate(candidate: Detection, gts: list[BoundingBox]) -> bool:
    if not gts:
        return False
    iou = backend.pairwise_iou(candidate.box.as_array().reshape(1, 4), boxes_to_array(gts))
    return float(iou.max()) > TRUTH_IOU


def _mask_for(gt_boxes: list[BoundingBox], cfg: SynthConfig) -> SegMask:
    px = np.zeros((cfg.image_height, cfg.image_width), dtype=np.uint8)
    shrink = cfg.mask_fidelity**0.5
    for b in gt_boxes:
        w, h = b.w * shrink, b.h * shrink
        x = b.x + (b.w - w) / 2.0
        y = b.y + (b.h - h) / 2.0
        c0 = max(int(np.ceil(x - 0.5)), 0)
        c1 = min(int(np.ceil(x + w - 0.5)), cfg.image_width)
        r0 = max(int(np.ceil(y - 0.5)), 0)
        r1 = min(int(np.ceil(y + h - 0.5)), cfg.image_height)
        if c1 > c0 and r1 > r0:
            px[r0:r1, c0:c1] = 1
    return SegMask(px)


def generate(cfg: SynthConfig) -> SynthCorpus:
    """Build the full corpus for a config; identical output for identical
    configs, on every platform."""
    rng = Xorshift64Star(cfg.seed)
    gts: list[GroundTruth] = []
    dets: list[Detection] = []
    masks: dict[str, SegMask] = {}
    per_image_gts: dict[str, list[BoundingBox]] = {}

    for i in range(cfg.num_images):
        image_id = f"img_{i:06d}"
        n_gt = rng.randint(cfg.gts_min, cfg.gts_max)
        boxes = []
        for _ in range(n_gt):
            h = rng.uniform_in(HEIGHT_RANGE[0] * cfg.image_height, HEIGHT_RANGE[1] * cfg.image_height)
            w = PEDESTRIAN_ASPECT * h
            x = rng.uniform_in(0.0, cfg.image_width - w)
            y = rng.uniform_in(0.0, cfg.image_height - h)
            boxes.append(BoundingBox(x, y, w, h))
        per_image_gts[image_id] = boxes
        gts.extend(GroundTruth(box=b, image_id=image_id) for b in boxes)

        serial = 0
        for b in boxes:
            if not rng.bernoulli(cfg.cg_recall):
                continue
            dx = rng.gauss(0.0, cfg.localization_noise)
            dy = rng.gauss(0.0, cfg.localization_noise)
            score = rng.uniform_in(*TRUE_SCORE_RANGE)
            dets.append(
                Detection(
                    box=BoundingBox(b.x + dx, b.y + dy, b.w, b.h),
                    score=score,
                    id=f"{image_id}:d{serial}",
                    image_id=image_id,
                )
            )
            serial += 1
        n_fp = int(cfg.fp_rate) + (1 if rng.bernoulli(cfg.fp_rate - int(cfg.fp_rate)) else 0)
        for _ in range(n_fp):
            h = rng.uniform_in(HEIGHT_RANGE[0] * cfg.image_height, HEIGHT_RANGE[1] * cfg.image_height)
            w = PEDESTRIAN_ASPECT * h
            x = rng.uniform_in(0.0, cfg.image_width - w)
            y = rng.uniform_in(0.0, cfg.image_height - h)
            score = rng.uniform_in(*FALSE_SCORE_RANGE)
            dets.append(
                Detection(
                    box=BoundingBox(x, y, w, h),
                    score=score,
                    id=f"{image_id}:d{serial}",
                    image_id=image_id,
                )
            )
            serial += 1
        masks[image_id] = _mask_for(boxes, cfg)

    opinions = []
    if cfg.classifier_reliabilities:
        opinions = [
            ClassifierOpinion(
                candidate_id=d.id,
                probs=[
                    opinion_oracle(d, per_image_gts[d.image_id], r, rng)
                    for r in cfg.classifier_reliabilities
                ],
            )
            for d in dets
        ]
    return SynthCorpus(gts, dets, opinions, masks)
