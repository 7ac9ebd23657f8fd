"""Score fusion: fixed soft-rejection scaling and the learned weight network.

Soft rejection rescales the candidate generator's score by one factor per
verification network, max(p_k / t1, t2): above-t1 opinions boost, weaker
ones attenuate, and the floor t2 keeps any single network from zeroing a
candidate.  The learned variant instead exponentiates each probability by
a per-network weight predicted from the log-probabilities by a small
dense network, trained here with plain mini-batch gradient descent.

Internal fused scores are left unclamped to preserve ranking; values are
clipped into [0, 1] only when records are serialized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fusedet._rng import Xorshift64Star
from fusedet.geometry import Detection
from fusedet.softlabel import SoftLabel

LOG_PROB_FLOOR = 1e-6  # default clamp before any log(p_k)
_SCORE_CLAMP = 1e-7  # keeps the training loss finite at fused scores 0/1


@dataclass
class ClassifierOpinion:
    candidate_id: str
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64).reshape(-1)
        if self.probs.size < 1:
            raise ValueError("opinion needs at least one probability")
        if np.any(self.probs < 0.0) or np.any(self.probs > 1.0):
            raise ValueError(f"opinion {self.candidate_id!r}: probabilities outside [0, 1]")


@dataclass(frozen=True)
class SoftRejectionParams:
    t1: float = 0.7
    t2: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.t1 <= 1.0:
            raise ValueError("t1 must lie in (0, 1]")
        if not 0.0 < self.t2 < 1.0:
            raise ValueError("t2 must lie in (0, 1)")
        if self.t2 >= 1.0 / self.t1:
            raise ValueError("t2 must stay below 1/t1")


@dataclass
class FusionWeights:
    w: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64).reshape(-1)
        if np.any(self.w < 0.0) or not np.all(np.isfinite(self.w)):
            raise ValueError("weights must be finite and non-negative")


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    log_prob_floor: float = LOG_PROB_FLOOR

    def __post_init__(self):
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.log_prob_floor <= 0.0:
            raise ValueError("log_prob_floor must be positive")


@dataclass
class FusionSample:
    """One training record: verifier probabilities, soft label, CG score."""

    probs: np.ndarray
    label: SoftLabel
    s_cg: float

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64).reshape(-1)


def soft_reject_scale(p_k: float, params: SoftRejectionParams) -> float:
    """Per-network scaling factor max(p_k / t1, t2)."""
    return max(p_k / params.t1, params.t2)


def fuse_scores(s_cg: float, scales) -> float:
    """Candidate score times the product of all scaling factors."""
    out = s_cg
    for s in scales:
        out *= s
    return out


def fuse_weighted(s_cg: float, probs, w, floor: float = LOG_PROB_FLOOR) -> float:
    """Weighted-product fusion s_cg * prod(p_k ** w_k), computed through
    logs; probabilities are clamped to [floor, 1] first."""
    weights = w.w if isinstance(w, FusionWeights) else np.asarray(w, dtype=np.float64)
    p = np.clip(np.asarray(probs, dtype=np.float64), floor, 1.0)
    if weights.shape != p.shape:
        raise ValueError(f"{weights.size} weights for {p.size} probabilities")
    return s_cg * math.exp(float(np.dot(weights, np.log(p))))


class FusionNetwork:
    """Two hidden ReLU layers and a weight head over K log-probabilities.

    The head is K * softmax(logits) * exp(log_scale): softmax fixes the
    relative split between networks while the learned positive scale frees
    the weights' sum, so they are not forced onto the simplex.  A fresh
    network (log_scale 0, uniform head) starts near weights of 1 each.
    """

    def __init__(self, inputs: int, hidden: tuple[int, int] = (500, 500), seed: int = 0):
        if inputs < 1:
            raise ValueError("network needs at least one input")
        h1, h2 = hidden
        if h1 < 1 or h2 < 1:
            raise ValueError("hidden widths must be >= 1")
        self.inputs = inputs
        self.hidden = (h1, h2)
        rng = Xorshift64Star(seed)
        self.w1 = _init_matrix(rng, h1, inputs)
        self.b1 = np.zeros(h1)
        self.w2 = _init_matrix(rng, h2, h1)
        self.b2 = np.zeros(h2)
        self.w3 = _init_matrix(rng, inputs, h2)
        self.b3 = np.zeros(inputs)
        self.log_scale = 0.0
        self.loss_history: list[float] = []

    def parameters(self) -> list[str]:
        return ["w1", "b1", "w2", "b2", "w3", "b3", "log_scale"]

    def weights_for(self, x: np.ndarray) -> np.ndarray:
        """Per-sample weight vectors for a batch of log-probability rows."""
        _, _, _, _, _, w = self._forward(np.atleast_2d(x))
        return w

    def _forward(self, x: np.ndarray):
        a1 = x @ self.w1.T + self.b1
        h1 = np.maximum(a1, 0.0)
        a2 = h1 @ self.w2.T + self.b2
        h2 = np.maximum(a2, 0.0)
        u = h2 @ self.w3.T + self.b3
        u = u - u.max(axis=1, keepdims=True)
        e = np.exp(u)
        sig = e / e.sum(axis=1, keepdims=True)
        w = self.inputs * math.exp(self.log_scale) * sig
        return a1, h1, a2, h2, sig, w


def _init_matrix(rng: Xorshift64Star, rows: int, cols: int) -> np.ndarray:
    # uniform in +-1/sqrt(fan_in), drawn row-major from the seeded stream
    bound = 1.0 / math.sqrt(cols)
    return np.array(
        [[rng.uniform_in(-bound, bound) for _ in range(cols)] for _ in range(rows)]
    )


@dataclass
class FusionForward:
    weights: FusionWeights
    fused_factor: float


def log_input(probs, floor: float = LOG_PROB_FLOOR) -> np.ndarray:
    """Network input row: log of the clamped probabilities."""
    return np.log(np.clip(np.asarray(probs, dtype=np.float64), floor, 1.0))


def fusion_forward(net: FusionNetwork, probs, floor: float = LOG_PROB_FLOOR) -> FusionForward:
    """Predict per-network weights for one candidate and the resulting
    multiplicative factor exp(sum w_k log p_k)."""
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    if p.size != net.inputs:
        raise ValueError(f"network expects {net.inputs} probabilities, got {p.size}")
    x = log_input(p, floor)
    w = net.weights_for(x)[0]
    return FusionForward(FusionWeights(w), math.exp(float(np.dot(w, x))))


def _batch_forward(net: FusionNetwork, x: np.ndarray, s_cg: np.ndarray):
    a1, h1, a2, h2, sig, w = net._forward(x)
    t = (w * x).sum(axis=1)
    f = np.exp(t)
    s_raw = s_cg * f
    s = np.clip(s_raw, _SCORE_CLAMP, 1.0 - _SCORE_CLAMP)
    return a1, h1, a2, h2, sig, w, t, f, s_raw, s


def fusion_loss(net: FusionNetwork, data: list[FusionSample], floor: float = LOG_PROB_FLOOR) -> float:
    """Mean cross entropy of the fused pedestrian probability against the
    soft labels."""
    x, labels, s_cg = _stack_samples(net, data, floor)
    *_, s = _batch_forward(net, x, s_cg)
    return float(np.mean(-(labels * np.log(s) + (1.0 - labels) * np.log(1.0 - s))))


def _stack_samples(net: FusionNetwork, data: list[FusionSample], floor: float):
    if not data:
        raise ValueError("no training samples")
    probs = np.stack([s.probs for s in data])
    if probs.shape[1] != net.inputs:
        raise ValueError(f"network expects {net.inputs} probabilities, got {probs.shape[1]}")
    x = log_input(probs, floor)
    labels = np.array([s.label.label_ped for s in data])
    s_cg = np.array([s.s_cg for s in data])
    return x, labels, s_cg


def _batch_gradients(net: FusionNetwork, x, labels, s_cg):
    """Analytic gradients of the mean fused cross entropy."""
    a1, h1, a2, h2, sig, w, t, f, s_raw, s = _batch_forward(net, x, s_cg)
    n = x.shape[0]
    dl_ds = (-labels / s + (1.0 - labels) / (1.0 - s)) / n
    # clipped samples contribute no gradient
    dl_ds = np.where((s_raw > _SCORE_CLAMP) & (s_raw < 1.0 - _SCORE_CLAMP), dl_ds, 0.0)
    dl_dt = dl_ds * s_cg * f
    # t = exp(log_scale) * K * (sig . x):  dt/du_m = w_m (x_m - sig . x)
    sdot = (sig * x).sum(axis=1, keepdims=True)
    du = dl_dt[:, None] * w * (x - sdot)
    grads = {
        "log_scale": float(np.dot(dl_dt, t)),
        "w3": du.T @ h2,
        "b3": du.sum(axis=0),
    }
    dh2 = du @ net.w3
    da2 = dh2 * (a2 > 0.0)
    grads["w2"] = da2.T @ h1
    grads["b2"] = da2.sum(axis=0)
    dh1 = da2 @ net.w2
    da1 = dh1 * (a1 > 0.0)
    grads["w1"] = da1.T @ x
    grads["b1"] = da1.sum(axis=0)
    loss = float(np.mean(-(labels * np.log(s) + (1.0 - labels) * np.log(1.0 - s))))
    return loss, grads


def train_fusion_network(
    data: list[FusionSample],
    cfg: TrainConfig,
    hidden: tuple[int, int] = (500, 500),
) -> FusionNetwork:
    """Fit the fusion network by seeded mini-batch gradient descent.

    Deterministic for a fixed config: initialization and batch shuffling
    both come from the package RNG.  epochs = 0 returns the freshly
    initialized network.  Raises RuntimeError if the loss stops being
    finite.
    """
    if not data:
        raise ValueError("no training samples")
    net = FusionNetwork(len(data[0].probs), hidden, seed=cfg.seed)
    x, labels, s_cg = _stack_samples(net, data, cfg.log_prob_floor)
    rng = Xorshift64Star(cfg.seed ^ 0xB5297A4D)
    order = list(range(len(data)))
    for epoch in range(cfg.epochs):
        rng.shuffle(order)
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = _batch_gradients(net, x[idx], labels[idx], s_cg[idx])
            if not math.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            epoch_loss += loss * len(idx)
            for name, grad in grads.items():
                setattr(net, name, getattr(net, name) - cfg.learning_rate * grad)
        net.loss_history.append(epoch_loss / len(order))
    return net


def mean_weights(net: FusionNetwork, data: list[FusionSample], floor: float = LOG_PROB_FLOOR) -> np.ndarray:
    """Dataset-level weight summary: the per-candidate weights averaged
    over all samples."""
    x, _, _ = _stack_samples(net, data, floor)
    return net.weights_for(x).mean(axis=0)


FusionModel = SoftRejectionParams | FusionWeights | FusionNetwork


def fuse_batch(
    detections: list[Detection],
    opinions: list[ClassifierOpinion],
    model: FusionModel,
    floor: float = LOG_PROB_FLOOR,
) -> list[Detection]:
    """Apply a fusion model to every detection, joined to its opinion by
    candidate id.  Order and boxes are preserved; scores are replaced.

    Raises ValueError on a duplicate or missing opinion, or when the
    opinion arity does not match the model.
    """
    by_id: dict[str, ClassifierOpinion] = {}
    for op in opinions:
        if op.candidate_id in by_id:
            raise ValueError(f"duplicate opinion for candidate {op.candidate_id!r}")
        by_id[op.candidate_id] = op
    out = []
    for det in detections:
        op = by_id.get(det.id)
        if op is None:
            raise ValueError(f"no opinion for candidate {det.id!r}")
        out.append(
            Detection(
                box=det.box,
                score=fuse_single(det.score, op.probs, model, floor),
                id=det.id,
                image_id=det.image_id,
                class_id=det.class_id,
                source=det.source,
            )
        )
    return out


def fuse_single(s_cg: float, probs, model: FusionModel, floor: float = LOG_PROB_FLOOR) -> float:
    """Fused score of one candidate under any of the three model kinds."""
    if isinstance(model, SoftRejectionParams):
        return fuse_scores(s_cg, [soft_reject_scale(float(p), model) for p in probs])
    if isinstance(model, FusionWeights):
        return fuse_weighted(s_cg, probs, model, floor)
    if isinstance(model, FusionNetwork):
        return s_cg * fusion_forward(model, probs, floor).fused_factor
    raise TypeError(f"unsupported fusion model: {type(model).__name__}")
