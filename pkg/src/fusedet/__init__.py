"""Detection score fusion and miss-rate evaluation toolkit.

Pieces: default-box generation and matching (anchors), soft candidate
labels and the cross-entropy objective (softlabel), soft-rejection and
learned-weight score fusion (fusion), mask-based fusion (segfusion),
FPPI/miss-rate evaluation (evaluation), a deterministic synthetic corpus
(synth), file codecs (formats), and a CLI (cli).  Hot kernels run on a
compiled backend when available; ``fusedet.backend.BACKEND`` says which.
"""

from fusedet.backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
