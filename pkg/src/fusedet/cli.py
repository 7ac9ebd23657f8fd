"""Command-line entry point and pipeline orchestration.

Subcommands: anchors, label, fuse, train-fusion, segfuse, eval, synth,
pipeline.  Exit codes: 0 success, 1 usage or validation error (bad flags,
malformed records, inconsistent inputs), 2 runtime failure.

Configuration files are INI: each subcommand reads its own section and
the pipeline wires the stages together (candidate scores -> classifier
fusion -> segmentation fusion -> evaluation).  Every output is a pure
function of the input files plus configuration, so reruns are
byte-identical.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

import numpy as np

from fusedet import anchors as anchors_mod
from fusedet import evaluation, formats, fusion, report, segfusion, softlabel, synth
from fusedet.formats import ParseError, canon9
from fusedet.geometry import Detection


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read_config(path: str) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = cfg.read(path)
    if not read:
        raise UsageError(f"cannot read config file {path!r}")
    return cfg


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


def _strings(text: str) -> list[str]:
    return [tok for tok in text.replace(",", " ").split()]


def _section(cfg: configparser.ConfigParser, name: str) -> configparser.SectionProxy:
    if name not in cfg:
        raise UsageError(f"config is missing the [{name}] section")
    return cfg[name]


# --- anchors ----------------------------------------------------------------


def _anchor_config(sec: configparser.SectionProxy) -> anchors_mod.AnchorConfig:
    return anchors_mod.AnchorConfig(
        aspect_ratios=_floats(sec.get("aspect_ratios", "0.1 0.2 0.41 0.8 1.6 3.0")),
        relative_heights=_floats(sec.get("relative_heights", "0.05 0.1 0.24 0.38 0.52 0.66 0.80")),
        image_width=sec.getfloat("image_width"),
        image_height=sec.getfloat("image_height"),
        extra_ratio=sec.getfloat("extra_ratio", fallback=None),
        extra_relative_heights=_floats(sec.get("extra_relative_heights", "")),
        clip=sec.getboolean("clip", fallback=False),
    )


def _parse_layers(text: str) -> list[anchors_mod.FeatureMapSpec]:
    layers = []
    for tok in _strings(text):
        parts = tok.split(":")
        if len(parts) != 3:
            raise UsageError(f"layer {tok!r} must look like name:rows:cols")
        layers.append(anchors_mod.FeatureMapSpec(parts[0], int(parts[1]), int(parts[2])))
    return layers


def cmd_anchors(args) -> int:
    cfg = _read_config(args.config)
    sec = _section(cfg, "anchors")
    boxes = anchors_mod.generate_default_boxes(_parse_layers(sec.get("layers", "")), _anchor_config(sec))
    lines = [
        json.dumps({"x": canon9(b.x), "y": canon9(b.y), "w": canon9(b.w), "h": canon9(b.h)})
        for b in boxes
    ]
    formats.write_lines(args.out, lines)
    print(f"wrote {len(lines)} default boxes to {args.out}")
    return 0


# --- label ------------------------------------------------------------------


def cmd_label(args) -> int:
    dets = formats.parse_detections(formats.read_lines(args.detections))
    gts = formats.parse_ground_truth(formats.read_lines(args.ground_truth))
    store: dict[str, list] = {}
    for gt in gts:
        store.setdefault(gt.image_id, []).append(gt.box)
    thr = softlabel.LabelThresholds(args.th_a, args.th_b)
    labeled = softlabel.build_training_set(dets, store, thr, args.min_score, args.min_height)
    formats.write_lines(args.out, [formats.serialize_labeled_candidate(lc) for lc in labeled])
    print(f"wrote {len(labeled)} labeled candidates to {args.out}")
    return 0


# --- fuse -------------------------------------------------------------------


def _merge_opinions(per_file: list[list[fusion.ClassifierOpinion]]) -> list[fusion.ClassifierOpinion]:
    """Concatenate per-network opinion files into K-wide records, keyed by
    candidate id; every file must cover the same candidates."""
    base = per_file[0]
    order = [op.candidate_id for op in base]
    parts: dict[str, list[np.ndarray]] = {op.candidate_id: [op.probs] for op in base}
    for ops in per_file[1:]:
        ids = {op.candidate_id for op in ops}
        missing = set(parts) - ids
        extra = ids - set(parts)
        if missing or extra:
            detail = []
            if missing:
                detail.append(f"missing {sorted(missing)[:3]}")
            if extra:
                detail.append(f"unknown {sorted(extra)[:3]}")
            raise ValueError("opinion files disagree on candidates: " + ", ".join(detail))
        for op in ops:
            parts[op.candidate_id].append(op.probs)
    return [fusion.ClassifierOpinion(cid, np.concatenate(parts[cid])) for cid in order]


def _load_opinions(paths: list[str]) -> list[fusion.ClassifierOpinion]:
    if not paths:
        raise UsageError("at least one opinions file is required")
    return _merge_opinions([formats.parse_opinions(formats.read_lines(p)) for p in paths])


def _model_from_args(args) -> fusion.FusionModel:
    if args.model == "soft-rejection":
        return fusion.SoftRejectionParams(args.t1, args.t2)
    if args.model == "weights":
        if not args.weights:
            raise UsageError("--weights is required for the weights model")
        return fusion.FusionWeights(_floats(args.weights))
    if not args.network:
        raise UsageError("--network is required for the network model")
    return formats.read_network(args.network)


def cmd_fuse(args) -> int:
    dets = formats.parse_detections(formats.read_lines(args.detections))
    opinions = _load_opinions(args.opinions)
    fused = fusion.fuse_batch(dets, opinions, _model_from_args(args), args.floor)
    formats.write_lines(args.out, [formats.serialize_detection(d) for d in fused])
    print(f"wrote {len(fused)} fused detections to {args.out}")
    return 0


# --- train-fusion -------------------------------------------------------------


def cmd_train_fusion(args) -> int:
    samples = formats.parse_fusion_samples(formats.read_lines(args.data))
    cfg = fusion.TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        log_prob_floor=args.floor,
    )
    hidden = tuple(int(v) for v in _strings(args.hidden))
    if len(hidden) != 2:
        raise UsageError("--hidden expects two widths, e.g. '500 500'")
    net = fusion.train_fusion_network(samples, cfg, hidden)
    formats.write_network(net, args.out)
    w = fusion.mean_weights(net, samples, cfg.log_prob_floor)
    summary = " ".join(f"{v:.4f}" for v in w)
    last = f", final loss {net.loss_history[-1]:.6f}" if net.loss_history else ""
    print(f"trained on {len(samples)} samples; mean weights [{summary}]{last}")
    print(f"wrote network to {args.out}")
    return 0


# --- segfuse ------------------------------------------------------------------


def _kernel_for(args, masks) -> segfusion.Kernel:
    if args.kernel:
        return formats.read_kernel(args.kernel)
    if not args.estimate_kernel:
        raise UsageError("provide --kernel FILE or --estimate-kernel with --ground-truth")
    if not args.ground_truth:
        raise UsageError("--estimate-kernel needs --ground-truth")
    gts = formats.parse_ground_truth(formats.read_lines(args.ground_truth))
    size = tuple(int(v) for v in _strings(args.kernel_size))
    if len(size) != 2:
        raise UsageError("--kernel-size expects 'rows cols'")
    kernel = segfusion.estimate_kernel(gts, masks, size)
    if args.kernel_out:
        formats.write_kernel(kernel, args.kernel_out)
        print(f"wrote estimated kernel to {args.kernel_out}")
    return kernel


def _apply_segfusion(dets, masks, mode, kernel=None, a_ss=4.0, b_ss=0.35, accept_threshold=0.2):
    out = []
    for det in dets:
        mask = masks.get(det.image_id)
        if mask is None:
            raise ValueError(f"no mask for image {det.image_id!r}")
        if mode == "kernel":
            score = segfusion.fuse_seg(det.score, segfusion.seg_score(det.box, mask, kernel))
        else:
            fraction = segfusion.mask_overlap_fraction(det.box, mask)
            score = segfusion.legacy_seg_fuse(det.score, fraction, a_ss, b_ss, accept_threshold)
        out.append(
            Detection(det.box, score, id=det.id, image_id=det.image_id,
                      class_id=det.class_id, source=det.source)
        )
    return out


def cmd_segfuse(args) -> int:
    dets = formats.parse_detections(formats.read_lines(args.detections))
    masks = formats.load_masks(args.masks)
    kernel = _kernel_for(args, masks) if args.mode == "kernel" else None
    fused = _apply_segfusion(dets, masks, args.mode, kernel, args.a_ss, args.b_ss, args.accept_threshold)
    formats.write_lines(args.out, [formats.serialize_detection(d) for d in fused])
    print(f"wrote {len(fused)} detections to {args.out}")
    return 0


# --- eval ---------------------------------------------------------------------


def _write_eval_outputs(out_dir: Path, variants: dict[str, list[Detection]], gts, settings,
                        iou: float, num_images, curves: bool) -> dict[str, dict[str, float]]:
    out_dir.mkdir(parents=True, exist_ok=True)
    table = evaluation.ablation_report(variants, gts, settings, iou, num_images)
    (out_dir / "report.txt").write_text(report.miss_rate_table_text(table), encoding="utf-8")
    (out_dir / "report.csv").write_text(report.miss_rate_table_csv(table), encoding="utf-8")
    if curves:
        for setting in settings:
            named = {
                name: evaluation.curve(dets, gts, setting, iou, num_images)
                for name, dets in variants.items()
            }
            base = f"curve_{setting.name}"
            for name, c in named.items():
                suffix = "" if len(named) == 1 else f"_{name}"
                (out_dir / f"{base}{suffix}.csv").write_text(
                    report.curve_csv(c), encoding="utf-8"
                )
            (out_dir / f"{base}.svg").write_text(
                report.curve_svg(named, title=f"miss rate vs FPPI ({setting.name})"),
                encoding="utf-8",
            )
    return table


def cmd_eval(args) -> int:
    dets = formats.parse_detections(formats.read_lines(args.detections))
    gts = formats.parse_ground_truth(formats.read_lines(args.ground_truth))
    settings = [evaluation.get_setting(s) for s in (args.setting or ["reasonable"])]
    table = _write_eval_outputs(
        Path(args.out), {"detections": dets}, gts, settings, args.iou, args.num_images, args.curves
    )
    sys.stdout.write(report.miss_rate_table_text(table))
    return 0


# --- synth --------------------------------------------------------------------


def _synth_config(sec: configparser.SectionProxy, seed_override: int | None) -> synth.SynthConfig:
    return synth.SynthConfig(
        seed=seed_override if seed_override is not None else sec.getint("seed", fallback=0),
        num_images=sec.getint("num_images", fallback=0),
        image_width=sec.getint("image_width", fallback=640),
        image_height=sec.getint("image_height", fallback=480),
        gts_min=sec.getint("gts_min", fallback=1),
        gts_max=sec.getint("gts_max", fallback=3),
        cg_recall=sec.getfloat("cg_recall", fallback=0.95),
        fp_rate=sec.getfloat("fp_rate", fallback=3.0),
        localization_noise=sec.getfloat("localization_noise", fallback=2.0),
        classifier_reliabilities=_floats(sec.get("classifier_reliabilities", "0.9 0.8")),
        mask_fidelity=sec.getfloat("mask_fidelity", fallback=1.0),
    )


def write_corpus(corpus: synth.SynthCorpus, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    formats.write_lines(out_dir / "detections.jsonl",
                        [formats.serialize_detection(d) for d in corpus.cg_detections])
    formats.write_lines(out_dir / "ground_truth.jsonl",
                        [formats.serialize_ground_truth(g) for g in corpus.gts])
    formats.write_lines(out_dir / "opinions.jsonl",
                        [formats.serialize_opinion(o) for o in corpus.opinions])
    mask_dir = out_dir / "masks"
    mask_dir.mkdir(exist_ok=True)
    for image_id, mask in corpus.masks.items():
        formats.write_pgm(mask, mask_dir / f"{image_id}.pgm")


def cmd_synth(args) -> int:
    cfg = _read_config(args.config)
    scfg = _synth_config(_section(cfg, "synth"), args.seed)
    corpus = synth.generate(scfg)
    write_corpus(corpus, Path(args.out))
    print(
        f"wrote {len(corpus.gts)} ground truths, {len(corpus.cg_detections)} detections, "
        f"{len(corpus.opinions)} opinions, {len(corpus.masks)} masks to {args.out}"
    )
    return 0


# --- pipeline -------------------------------------------------------------------


def _pipeline_model(cfg: configparser.ConfigParser) -> tuple[fusion.FusionModel, float]:
    sec = _section(cfg, "fusion")
    kind = sec.get("model", "soft-rejection").strip()
    floor = sec.getfloat("log_prob_floor", fallback=fusion.LOG_PROB_FLOOR)
    if kind == "soft-rejection":
        t1 = sec.getfloat("t1", fallback=0.7)
        t2 = sec.getfloat("t2", fallback=0.1)
        return fusion.SoftRejectionParams(t1, t2), floor
    if kind == "weights":
        return fusion.FusionWeights(_floats(sec.get("weights", ""))), floor
    if kind == "network":
        return formats.read_network(sec.get("network")), floor
    raise UsageError(f"unknown fusion model {kind!r}")


def run_pipeline(config_path: str, out_dir: str | Path) -> dict[str, dict[str, float]]:
    """Classifier fusion, then segmentation fusion, then evaluation.

    Writes fused_detections.jsonl, report.txt/.csv, and per-setting curve
    CSV+SVG files into out_dir; returns the miss-rate table.
    """
    cfg = _read_config(config_path)
    sec = _section(cfg, "pipeline")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    dets = formats.parse_detections(formats.read_lines(sec.get("detections")))
    gts = formats.parse_ground_truth(formats.read_lines(sec.get("ground_truth")))
    model, floor = _pipeline_model(cfg)
    opinions = _load_opinions(_strings(sec.get("opinions", "")))
    fused = fusion.fuse_batch(dets, opinions, model, floor)

    mode = cfg.get("segfusion", "mode", fallback="off").strip()
    if mode not in ("off", "kernel", "legacy"):
        raise UsageError(f"segfusion mode must be off, kernel, or legacy, not {mode!r}")
    if mode != "off":
        masks = formats.load_masks(cfg.get("segfusion", "masks"))
        kernel = None
        if mode == "kernel":
            kernel_path = cfg.get("segfusion", "kernel", fallback="")
            if kernel_path:
                kernel = formats.read_kernel(kernel_path)
            else:
                size = (
                    cfg.getint("segfusion", "kernel_rows", fallback=segfusion.KERNEL_ROWS),
                    cfg.getint("segfusion", "kernel_cols", fallback=segfusion.KERNEL_COLS),
                )
                kernel = segfusion.estimate_kernel(gts, masks, size)
                formats.write_kernel(kernel, out / "kernel.txt")
        fused = _apply_segfusion(
            fused, masks, mode, kernel,
            cfg.getfloat("segfusion", "a_ss", fallback=4.0),
            cfg.getfloat("segfusion", "b_ss", fallback=0.35),
            cfg.getfloat("segfusion", "accept_threshold", fallback=0.2),
        )

    formats.write_lines(out / "fused_detections.jsonl",
                        [formats.serialize_detection(d) for d in fused])

    settings = [evaluation.get_setting(s) for s in _strings(sec.get("settings", "reasonable"))]
    num_images = sec.getint("num_images", fallback=None)
    iou = sec.getfloat("iou_threshold", fallback=0.5)
    return _write_eval_outputs(out, {"fused": fused}, gts, settings, iou, num_images, curves=True)


def cmd_pipeline(args) -> int:
    table = run_pipeline(args.config, args.out)
    sys.stdout.write(report.miss_rate_table_text(table))
    return 0


# --- parser -----------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="fusedet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("anchors", help="generate default boxes from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_anchors)

    p = sub.add_parser("label", help="soft-label candidates against ground truth")
    p.add_argument("--detections", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--th-a", type=float, default=0.4)
    p.add_argument("--th-b", type=float, default=0.6)
    p.add_argument("--min-score", type=float, default=0.01)
    p.add_argument("--min-height", type=float, default=40.0)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("fuse", help="fuse detection scores with classifier opinions")
    p.add_argument("--detections", required=True)
    p.add_argument("--opinions", action="append", required=True,
                   help="opinions file; repeat once per network")
    p.add_argument("--out", required=True)
    p.add_argument("--model", choices=["soft-rejection", "weights", "network"],
                   default="soft-rejection")
    p.add_argument("--t1", type=float, default=0.7)
    p.add_argument("--t2", type=float, default=0.1)
    p.add_argument("--weights", help="fixed exponents, e.g. '1.11 2.22'")
    p.add_argument("--network", help="trained network file")
    p.add_argument("--floor", type=float, default=fusion.LOG_PROB_FLOOR)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("train-fusion", help="train the fusion network")
    p.add_argument("--data", required=True, help="fusion sample records")
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", default="500 500")
    p.add_argument("--floor", type=float, default=fusion.LOG_PROB_FLOOR)
    p.set_defaults(func=cmd_train_fusion)

    p = sub.add_parser("segfuse", help="fuse detections with segmentation masks")
    p.add_argument("--detections", required=True)
    p.add_argument("--masks", required=True, help="directory of .pgm masks")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["kernel", "legacy"], default="kernel")
    p.add_argument("--kernel", help="kernel matrix file")
    p.add_argument("--estimate-kernel", action="store_true")
    p.add_argument("--ground-truth", help="gt file for kernel estimation")
    p.add_argument("--kernel-size", default=f"{segfusion.KERNEL_ROWS} {segfusion.KERNEL_COLS}")
    p.add_argument("--kernel-out", help="write the estimated kernel here")
    p.add_argument("--a-ss", type=float, default=4.0)
    p.add_argument("--b-ss", type=float, default=0.35)
    p.add_argument("--accept-threshold", type=float, default=0.2)
    p.set_defaults(func=cmd_segfuse)

    p = sub.add_parser("eval", help="miss-rate evaluation report")
    p.add_argument("--detections", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--setting", action="append",
                   help=f"repeatable; one of: {', '.join(evaluation.SETTINGS)}")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--num-images", type=int)
    p.add_argument("--curves", action="store_true", help="also write curve CSV+SVG")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="fusion + segfusion + evaluation in one run")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ParseError, ValueError, KeyError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
