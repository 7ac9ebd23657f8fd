import numpy as np
import pytest

from fusedet._rng import Xorshift64Star
from fusedet.formats import (
    serialize_detection,
    serialize_ground_truth,
    serialize_opinion,
    parse_detections,
    parse_ground_truth,
    parse_opinions,
)
from fusedet.geometry import BoundingBox, Detection, jaccard
from fusedet.synth import SynthConfig, SynthCorpus, generate, opinion_oracle


def corpus_fingerprint(c: SynthCorpus) -> str:
    lines = [serialize_ground_truth(g) for g in c.gts]
    lines += [serialize_detection(d) for d in c.cg_detections]
    lines += [serialize_opinion(o) for o in c.opinions]
    lines += [f"{i}:{c.masks[i].pixels.tobytes().hex()}" for i in sorted(c.masks)]
    return "\n".join(lines)


class TestGenerate:
    def test_zero_images_empty(self):
        c = generate(SynthConfig(seed=1, num_images=0))
        assert c.gts == [] and c.cg_detections == [] and c.opinions == [] and c.masks == {}

    def test_same_seed_identical_output(self):
        cfg = SynthConfig(seed=42, num_images=12)
        assert corpus_fingerprint(generate(cfg)) == corpus_fingerprint(generate(cfg))

    def test_different_seed_differs(self):
        a = generate(SynthConfig(seed=1, num_images=8))
        b = generate(SynthConfig(seed=2, num_images=8))
        assert corpus_fingerprint(a) != corpus_fingerprint(b)

    def test_degenerate_config_reproduces_gts(self):
        cfg = SynthConfig(seed=3, num_images=6, cg_recall=1.0, fp_rate=0.0, localization_noise=0.0)
        c = generate(cfg)
        assert len(c.cg_detections) == len(c.gts)
        for d, g in zip(c.cg_detections, c.gts):
            assert d.image_id == g.image_id
            assert d.box == g.box

    def test_every_image_gets_a_mask(self):
        c = generate(SynthConfig(seed=4, num_images=5))
        assert sorted(c.masks) == sorted({g.image_id for g in c.gts})

    def test_full_fidelity_mask_covers_gt_interior(self):
        cfg = SynthConfig(seed=5, num_images=3, mask_fidelity=1.0)
        c = generate(cfg)
        for g in c.gts:
            mask = c.masks[g.image_id].pixels
            cx = int(g.box.x + g.box.w / 2)
            cy = int(g.box.y + g.box.h / 2)
            assert mask[cy, cx] == 1

    def test_one_opinion_per_detection(self):
        c = generate(SynthConfig(seed=6, num_images=10))
        assert [o.candidate_id for o in c.opinions] == [d.id for d in c.cg_detections]
        assert all(len(o.probs) == 2 for o in c.opinions)

    def test_outputs_pass_ingest_validation(self):
        c = generate(SynthConfig(seed=7, num_images=10))
        dets = parse_detections(serialize_detection(d) for d in c.cg_detections)
        gts = parse_ground_truth(serialize_ground_truth(g) for g in c.gts)
        ops = parse_opinions(serialize_opinion(o) for o in c.opinions)
        assert len(dets) == len(c.cg_detections)
        assert len(gts) == len(c.gts)
        assert len(ops) == len(c.opinions)

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            SynthConfig(cg_recall=1.5)
        with pytest.raises(ValueError):
            SynthConfig(classifier_reliabilities=[0.3])
        with pytest.raises(ValueError):
            SynthConfig(gts_min=4, gts_max=2)


class TestOpinionOracle:
    def true_candidate(self):
        gt = BoundingBox(10, 10, 20, 50)
        det = Detection(gt, 0.8, id="t", image_id="i")
        return det, [gt]

    def false_candidate(self):
        det = Detection(BoundingBox(200, 200, 20, 50), 0.8, id="f", image_id="i")
        return det, [BoundingBox(10, 10, 20, 50)]

    def test_reliability_one_true_always_confident(self):
        det, gts = self.true_candidate()
        rng = Xorshift64Star(8)
        assert all(opinion_oracle(det, gts, 1.0, rng) > 0.5 for _ in range(2000))

    def test_reliability_half_is_uninformative(self):
        rng = Xorshift64Star(9)
        hits = 0
        n = 10000
        for i in range(n):
            det, gts = self.true_candidate() if i % 2 == 0 else self.false_candidate()
            p = opinion_oracle(det, gts, 0.5, rng)
            is_true = i % 2 == 0
            if (p > 0.5) == is_true:
                hits += 1
        assert abs(hits / n - 0.5) < 0.05

    def test_reliability_ninety_percent_accuracy(self):
        rng = Xorshift64Star(10)
        hits = 0
        n = 10000
        for i in range(n):
            det, gts = self.true_candidate() if i % 2 == 0 else self.false_candidate()
            p = opinion_oracle(det, gts, 0.9, rng)
            if (p > 0.5) == (i % 2 == 0):
                hits += 1
        assert abs(hits / n - 0.9) < 0.02

    def test_truth_requires_majority_overlap(self):
        gt = BoundingBox(0, 0, 10, 10)
        nearby = Detection(BoundingBox(8, 8, 10, 10), 0.5, id="n", image_id="i")
        assert jaccard(nearby.box, gt) < 0.5
        rng = Xorshift64Star(11)
        # reliability 1.0 on a sub-threshold candidate stays low
        assert all(opinion_oracle(nearby, [gt], 1.0, rng) < 0.5 for _ in range(500))
