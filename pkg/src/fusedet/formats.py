"""File codecs: JSON-lines records, PGM masks, kernel and network dumps.

Records are one JSON object per line, UTF-8.  Floats are written with 9
significant digits so outputs diff identically across platforms; scores
are clipped into [0, 1] at this boundary (internal fused scores may
exceed 1 to preserve ranking).  Parsers validate every record and report
the offending line number; nothing malformed is silently dropped.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from fusedet.evaluation import GroundTruth
from fusedet.fusion import ClassifierOpinion, FusionNetwork, FusionSample
from fusedet.geometry import BoundingBox, Detection
from fusedet.segfusion import Kernel, SegMask
from fusedet.softlabel import LabeledCandidate, SoftLabel


class ParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def canon9(x: float) -> float:
    """Round to 9 significant digits (the serialized precision)."""
    return float("%.9g" % float(x))


def _clip_score(x: float) -> float:
    return min(max(float(x), 0.0), 1.0)


def _require(cond: bool, line: int, message: str) -> None:
    if not cond:
        raise ParseError(line, message)


def _records(lines) -> list[tuple[int, dict]]:
    out = []
    for n, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text:
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(n, f"invalid JSON ({exc.msg})") from exc
        _require(isinstance(obj, dict), n, "record must be a JSON object")
        out.append((n, obj))
    return out


def _get(obj: dict, key: str, line: int):
    _require(key in obj, line, f"missing field {key!r}")
    return obj[key]


def _get_float(obj: dict, key: str, line: int) -> float:
    v = _get(obj, key, line)
    _require(isinstance(v, (int, float)) and not isinstance(v, bool), line, f"{key!r} must be a number")
    _require(math.isfinite(float(v)), line, f"{key!r} must be finite")
    return float(v)


def _get_box(obj: dict, line: int) -> BoundingBox:
    x = _get_float(obj, "x", line)
    y = _get_float(obj, "y", line)
    w = _get_float(obj, "w", line)
    h = _get_float(obj, "h", line)
    _require(w > 0 and h > 0, line, "box width and height must be positive")
    return BoundingBox(x, y, w, h)


# --- detections -----------------------------------------------------------


def serialize_detection(det: Detection) -> str:
    return json.dumps(
        {
            "image_id": det.image_id,
            "id": det.id,
            "class": det.class_id,
            "x": canon9(det.box.x),
            "y": canon9(det.box.y),
            "w": canon9(det.box.w),
            "h": canon9(det.box.h),
            "score": canon9(_clip_score(det.score)),
        }
    )


def parse_detections(lines) -> list[Detection]:
    out = []
    for n, obj in _records(lines):
        box = _get_box(obj, n)
        score = _get_float(obj, "score", n)
        _require(0.0 <= score <= 1.0, n, "score must lie in [0, 1]")
        out.append(
            Detection(
                box=box,
                score=score,
                id=str(_get(obj, "id", n)),
                image_id=str(_get(obj, "image_id", n)),
                class_id=int(obj.get("class", 1)),
            )
        )
    return out


# --- ground truth ---------------------------------------------------------


def serialize_ground_truth(gt: GroundTruth) -> str:
    obj = {
        "image_id": gt.image_id,
        "x": canon9(gt.box.x),
        "y": canon9(gt.box.y),
        "w": canon9(gt.box.w),
        "h": canon9(gt.box.h),
        "occlusion": canon9(gt.occlusion_fraction),
        "ignore": bool(gt.ignore),
        "class": gt.class_id,
    }
    if gt.truncation:
        obj["truncation"] = canon9(gt.truncation)
    return json.dumps(obj)


def parse_ground_truth(lines) -> list[GroundTruth]:
    out = []
    for n, obj in _records(lines):
        box = _get_box(obj, n)
        occ = _get_float(obj, "occlusion", n) if "occlusion" in obj else 0.0
        _require(0.0 <= occ <= 1.0, n, "occlusion must lie in [0, 1]")
        trunc = _get_float(obj, "truncation", n) if "truncation" in obj else 0.0
        _require(0.0 <= trunc <= 1.0, n, "truncation must lie in [0, 1]")
        ignore = obj.get("ignore", False)
        _require(isinstance(ignore, bool), n, "'ignore' must be a boolean")
        out.append(
            GroundTruth(
                box=box,
                image_id=str(_get(obj, "image_id", n)),
                occlusion_fraction=occ,
                ignore=ignore,
                class_id=int(obj.get("class", 1)),
                truncation=trunc,
            )
        )
    return out


# --- classifier opinions ----------------------------------------------------


def serialize_opinion(op: ClassifierOpinion) -> str:
    return json.dumps({"id": op.candidate_id, "probs": [canon9(p) for p in op.probs]})


def parse_opinions(lines) -> list[ClassifierOpinion]:
    out = []
    seen: set[str] = set()
    width = None
    for n, obj in _records(lines):
        cid = str(_get(obj, "id", n))
        _require(cid not in seen, n, f"duplicate candidate id {cid!r}")
        seen.add(cid)
        probs = _get(obj, "probs", n)
        _require(isinstance(probs, list) and len(probs) >= 1, n, "'probs' must be a non-empty list")
        for p in probs:
            _require(
                isinstance(p, (int, float)) and not isinstance(p, bool) and 0.0 <= p <= 1.0,
                n,
                "probabilities must lie in [0, 1]",
            )
        if width is None:
            width = len(probs)
        _require(len(probs) == width, n, f"expected {width} probabilities, got {len(probs)}")
        out.append(ClassifierOpinion(cid, probs))
    return out


# --- labeled candidates -----------------------------------------------------


def serialize_labeled_candidate(lc: LabeledCandidate) -> str:
    obj = json.loads(serialize_detection(lc.detection))
    obj["label_ped"] = canon9(lc.label.label_ped)
    obj["label_bg"] = canon9(lc.label.label_bg)
    if lc.matched_gt is not None:
        obj["matched_gt"] = lc.matched_gt
    return json.dumps(obj)


def parse_labeled_candidates(lines) -> list[LabeledCandidate]:
    lines = list(lines)
    dets = parse_detections(lines)
    out = []
    for det, (n, obj) in zip(dets, _records(lines)):
        ped = _get_float(obj, "label_ped", n)
        _require(0.0 <= ped <= 1.0, n, "label_ped must lie in [0, 1]")
        matched = obj.get("matched_gt")
        out.append(LabeledCandidate(det, SoftLabel.pedestrian(ped), int(matched) if matched is not None else None))
    return out


# --- fusion training samples ------------------------------------------------


def serialize_fusion_sample(s: FusionSample) -> str:
    return json.dumps(
        {
            "probs": [canon9(p) for p in s.probs],
            "label_ped": canon9(s.label.label_ped),
            "s_cg": canon9(_clip_score(s.s_cg)),
        }
    )


def parse_fusion_samples(lines) -> list[FusionSample]:
    out = []
    width = None
    for n, obj in _records(lines):
        probs = _get(obj, "probs", n)
        _require(isinstance(probs, list) and len(probs) >= 1, n, "'probs' must be a non-empty list")
        if width is None:
            width = len(probs)
        _require(len(probs) == width, n, f"expected {width} probabilities, got {len(probs)}")
        ped = _get_float(obj, "label_ped", n)
        _require(0.0 <= ped <= 1.0, n, "label_ped must lie in [0, 1]")
        s_cg = _get_float(obj, "s_cg", n)
        _require(0.0 <= s_cg <= 1.0, n, "s_cg must lie in [0, 1]")
        out.append(FusionSample(probs, SoftLabel.pedestrian(ped), s_cg))
    return out


# --- line-file helpers ------------------------------------------------------


def write_lines(path: str | Path, lines: list[str]) -> None:
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_lines(path: str | Path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


# --- PGM masks --------------------------------------------------------------


def write_pgm(mask: SegMask, path: str | Path) -> None:
    """Binary PGM, maxval 255, foreground stored as 255."""
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + (mask.pixels * np.uint8(255)).tobytes())


def _pgm_tokens(data: bytes):
    """Header tokens with '#' comments skipped; yields (token, next_offset)."""
    i = 0
    while True:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace():
            i += 1
        if start == i:
            return
        yield data[start:i].decode("ascii"), i


def read_pgm(path: str | Path) -> SegMask:
    """P5 (binary) or P2 (text) grayscale; any nonzero value is foreground."""
    data = Path(path).read_bytes()
    tokens = _pgm_tokens(data)
    try:
        magic, _ = next(tokens)
        (w, _), (h, _), (maxval, offset) = (
            (int(t), o) for t, o in (next(tokens), next(tokens), next(tokens))
        )
    except (StopIteration, ValueError) as exc:
        raise ValueError(f"{path}: malformed PGM header") from exc
    if magic not in ("P2", "P5"):
        raise ValueError(f"{path}: unsupported magic {magic!r}")
    if w < 1 or h < 1 or not 0 < maxval <= 255:
        raise ValueError(f"{path}: bad PGM dimensions or maxval")
    if magic == "P5":
        raster = data[offset + 1 : offset + 1 + w * h]
        if len(raster) != w * h:
            raise ValueError(f"{path}: truncated PGM raster")
        px = np.frombuffer(raster, dtype=np.uint8).reshape(h, w)
    else:
        values = [int(t) for t, _ in tokens]
        if len(values) != w * h:
            raise ValueError(f"{path}: expected {w * h} samples, got {len(values)}")
        px = np.array(values, dtype=np.int64).reshape(h, w)
    return SegMask(px)


def load_masks(directory: str | Path) -> dict[str, SegMask]:
    """All .pgm files in a directory, keyed by file stem (the image id)."""
    out = {}
    for p in sorted(Path(directory).glob("*.pgm")):
        out[p.stem] = read_pgm(p)
    return out


# --- kernel -----------------------------------------------------------------


def write_kernel(kernel: Kernel, path: str | Path) -> None:
    lines = [f"{kernel.rows} {kernel.cols}"]
    for row in kernel.weights:
        lines.append(" ".join("%.17g" % v for v in row))
    write_lines(path, lines)


def read_kernel(path: str | Path) -> Kernel:
    lines = read_lines(path)
    if not lines:
        raise ValueError(f"{path}: empty kernel file")
    try:
        rows, cols = (int(v) for v in lines[0].split())
        weights = np.array(
            [[float(v) for v in line.split()] for line in lines[1 : rows + 1]]
        ).reshape(rows, cols)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed kernel file") from exc
    return Kernel(weights)


# --- fusion network ---------------------------------------------------------

_NET_MAGIC = "fusedet-net 1"


def write_network(net: FusionNetwork, path: str | Path) -> None:
    """Versioned text dump with full-precision parameters."""
    lines = [
        _NET_MAGIC,
        f"inputs {net.inputs}",
        f"hidden {net.hidden[0]} {net.hidden[1]}",
        "log_scale %.17g" % net.log_scale,
    ]
    for name in ("w1", "b1", "w2", "b2", "w3", "b3"):
        lines.append(name)
        mat = np.atleast_2d(getattr(net, name))
        for row in mat:
            lines.append(" ".join("%.17g" % v for v in row))
    write_lines(path, lines)


def read_network(path: str | Path) -> FusionNetwork:
    lines = read_lines(path)
    if not lines or lines[0] != _NET_MAGIC:
        raise ValueError(f"{path}: not a fusedet network file")
    try:
        inputs = int(lines[1].split()[1])
        h1, h2 = (int(v) for v in lines[2].split()[1:])
        log_scale = float(lines[3].split()[1])
        net = FusionNetwork(inputs, (h1, h2), seed=0)
        net.log_scale = log_scale
        shapes = {
            "w1": (h1, inputs), "b1": (h1,),
            "w2": (h2, h1), "b2": (h2,),
            "w3": (inputs, h2), "b3": (inputs,),
        }
        i = 4
        for name, shape in shapes.items():
            if lines[i] != name:
                raise ValueError(f"expected section {name!r}, found {lines[i]!r}")
            rows = shape[0] if len(shape) == 2 else 1
            block = np.array(
                [[float(v) for v in lines[i + 1 + r].split()] for r in range(rows)]
            )
            setattr(net, name, block.reshape(shape))
            i += 1 + rows
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{path}: malformed network file ({exc})") from exc
    return net
