"""Benchmark the compiled kernels against the NumPy reference backend.

Run with:  python3 benchmarks/bench_backends.py

Workloads mirror the package's hot paths: a large pairwise-IoU block
(anchor matching), many small per-image greedy matches (curve
evaluation), and mask crop scoring (segmentation fusion).
"""

from __future__ import annotations

import time

import numpy as np

from fusedet.backend import _reference

try:
    from fusedet.backend import _kernels
except ImportError:
    _kernels = None

BACKENDS = {"numpy": _reference}
if _kernels is not None:
    BACKENDS["cython"] = _kernels


def random_boxes(rng, n, span):
    out = np.empty((n, 4))
    out[:, 0] = rng.uniform(0, span, n)
    out[:, 1] = rng.uniform(0, span, n)
    out[:, 2] = rng.uniform(4, 40, n)
    out[:, 3] = rng.uniform(8, 90, n)
    return out


def timeit(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_pairwise(impl, data):
    anchors, gts = data
    return timeit(lambda: impl.pairwise_iou(anchors, gts))


def bench_matching(impl, data):
    def run():
        for dets, gts, ignored in data:
            impl.greedy_match(dets, gts, ignored, 0.5)

    return timeit(run)


def bench_masks(impl, data):
    mask, boxes = data

    def run():
        impl.mask_box_fraction(mask, boxes)
        for box in boxes:
            impl.crop_resample(mask, box, 64, 32)

    return timeit(run)


def main():
    rng = np.random.default_rng(2024)
    pairwise_data = (random_boxes(rng, 20000, 600), random_boxes(rng, 200, 600))
    matching_data = []
    for _ in range(2000):
        gts = random_boxes(rng, int(rng.integers(1, 8)), 600)
        matching_data.append(
            (random_boxes(rng, int(rng.integers(3, 25)), 600), gts, rng.random(len(gts)) < 0.2)
        )
    mask = (rng.random((480, 640)) > 0.6).astype(np.uint8)
    mask_data = (mask, random_boxes(rng, 500, 600))

    workloads = [
        ("pairwise_iou 20000x200", bench_pairwise, pairwise_data),
        ("greedy_match 2000 images", bench_matching, matching_data),
        ("mask scoring 500 boxes", bench_masks, mask_data),
    ]

    print(f"{'workload':<28}" + "".join(f"{name:>12}" for name in BACKENDS) + f"{'speedup':>10}")
    for label, fn, data in workloads:
        times = {name: fn(impl, data) for name, impl in BACKENDS.items()}
        row = f"{label:<28}" + "".join(f"{times[name] * 1e3:>10.1f}ms" for name in BACKENDS)
        if "cython" in times:
            row += f"{times['numpy'] / times['cython']:>9.1f}x"
        print(row)
    if _kernels is None:
        print("\ncompiled backend unavailable; only the NumPy reference was timed")


if __name__ == "__main__":
    main()
