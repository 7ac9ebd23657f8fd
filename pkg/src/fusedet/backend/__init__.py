"""Kernel backend selection.

The hot kernels (pairwise box overlap, greedy matching, mask resampling)
exist twice: a Cython extension and a NumPy reference with identical
semantics.  The compiled module is preferred when importable; set
``FUSEDET_BACKEND=python`` to force the reference, or
``FUSEDET_BACKEND=cython`` to fail loudly when the extension is missing.
``benchmarks/bench_backends.py`` compares the two.
"""

import os

_choice = os.environ.get("FUSEDET_BACKEND", "auto").strip().lower()

if _choice in ("auto", ""):
    try:
        from fusedet.backend import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        from fusedet.backend import _reference as _impl

        BACKEND = "python"
elif _choice == "cython":
    from fusedet.backend import _kernels as _impl

    BACKEND = "cython"
elif _choice == "python":
    from fusedet.backend import _reference as _impl

    BACKEND = "python"
else:
    raise ImportError(f"FUSEDET_BACKEND must be auto, cython, or python, not {_choice!r}")

FP = _impl.FP
TP = _impl.TP
IGNORED = _impl.IGNORED
pairwise_intersection = _impl.pairwise_intersection
pairwise_iou = _impl.pairwise_iou
max_overlap_over_first = _impl.max_overlap_over_first
greedy_match = _impl.greedy_match
mask_box_fraction = _impl.mask_box_fraction
crop_resample = _impl.crop_resample

__all__ = [
    "BACKEND",
    "FP",
    "TP",
    "IGNORED",
    "pairwise_intersection",
    "pairwise_iou",
    "max_overlap_over_first",
    "greedy_match",
    "mask_box_fraction",
    "crop_resample",
]
