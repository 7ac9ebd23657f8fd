import json
from pathlib import Path

import numpy as np
import pytest

from fusedet import cli
from fusedet.formats import (
    parse_detections,
    read_kernel,
    read_lines,
    serialize_fusion_sample,
    write_lines,
)
from fusedet.fusion import FusionSample
from fusedet.softlabel import SoftLabel
from fusedet.synth import SynthConfig, generate


def synth_ini(tmp_path, **overrides) -> Path:
    values = dict(seed=7, num_images=12, image_width=320, image_height=240,
                  gts_min=1, gts_max=2, cg_recall=0.95, fp_rate=2.0,
                  localization_noise=1.0, classifier_reliabilities="0.9 0.8",
                  mask_fidelity=1.0)
    values.update(overrides)
    body = "[synth]\n" + "\n".join(f"{k} = {v}" for k, v in values.items()) + "\n"
    path = tmp_path / "synth.ini"
    path.write_text(body)
    return path


@pytest.fixture
def corpus_dir(tmp_path):
    out = tmp_path / "corpus"
    assert cli.main(["synth", "--config", str(synth_ini(tmp_path)), "--out", str(out)]) == 0
    return out


def test_synth_writes_all_outputs(corpus_dir):
    assert (corpus_dir / "detections.jsonl").exists()
    assert (corpus_dir / "ground_truth.jsonl").exists()
    assert (corpus_dir / "opinions.jsonl").exists()
    assert list((corpus_dir / "masks").glob("*.pgm"))


def test_synth_seed_override_changes_output(tmp_path, corpus_dir):
    other = tmp_path / "corpus2"
    assert cli.main([
        "synth", "--config", str(synth_ini(tmp_path)), "--out", str(other), "--seed", "99",
    ]) == 0
    assert (other / "detections.jsonl").read_text() != (corpus_dir / "detections.jsonl").read_text()


def test_anchors_command(tmp_path):
    ini = tmp_path / "anchors.ini"
    ini.write_text(
        "[anchors]\nimage_width = 100\nimage_height = 100\n"
        "aspect_ratios = 1.0\nrelative_heights = 0.5\nlayers = top:1:1 mid:2:2\n"
    )
    out = tmp_path / "boxes.jsonl"
    assert cli.main(["anchors", "--config", str(ini), "--out", str(out)]) == 0
    lines = [json.loads(l) for l in read_lines(out)]
    assert len(lines) == 5
    assert lines[0] == {"x": 25, "y": 25, "w": 50, "h": 50}


def test_label_command(corpus_dir, tmp_path):
    out = tmp_path / "labeled.jsonl"
    code = cli.main([
        "label", "--detections", str(corpus_dir / "detections.jsonl"),
        "--ground-truth", str(corpus_dir / "ground_truth.jsonl"),
        "--out", str(out),
    ])
    assert code == 0
    rows = [json.loads(l) for l in read_lines(out)]
    assert rows
    for row in rows:
        assert abs(row["label_ped"] + row["label_bg"] - 1.0) < 1e-9


def test_fuse_identity_at_t1(corpus_dir, tmp_path):
    dets = parse_detections(read_lines(corpus_dir / "detections.jsonl"))
    ops = tmp_path / "flat.jsonl"
    write_lines(ops, [json.dumps({"id": d.id, "probs": [0.7, 0.7]}) for d in dets])
    out = tmp_path / "fused.jsonl"
    code = cli.main([
        "fuse", "--detections", str(corpus_dir / "detections.jsonl"),
        "--opinions", str(ops), "--out", str(out),
        "--model", "soft-rejection", "--t1", "0.7", "--t2", "0.1",
    ])
    assert code == 0
    fused = parse_detections(read_lines(out))
    assert [d.score for d in fused] == pytest.approx([d.score for d in dets])


def test_fuse_concatenates_opinion_files(corpus_dir, tmp_path):
    dets = parse_detections(read_lines(corpus_dir / "detections.jsonl"))
    a = tmp_path / "net_a.jsonl"
    b = tmp_path / "net_b.jsonl"
    write_lines(a, [json.dumps({"id": d.id, "probs": [0.5]}) for d in dets])
    write_lines(b, [json.dumps({"id": d.id, "probs": [0.5]}) for d in dets])
    out = tmp_path / "fused.jsonl"
    code = cli.main([
        "fuse", "--detections", str(corpus_dir / "detections.jsonl"),
        "--opinions", str(a), "--opinions", str(b), "--out", str(out),
        "--model", "weights", "--weights", "1 1",
    ])
    assert code == 0
    fused = parse_detections(read_lines(out))
    assert [d.score for d in fused] == pytest.approx([d.score * 0.25 for d in dets])


def test_fuse_rejects_mismatched_opinion_files(corpus_dir, tmp_path):
    dets = parse_detections(read_lines(corpus_dir / "detections.jsonl"))
    a = tmp_path / "net_a.jsonl"
    b = tmp_path / "net_b.jsonl"
    write_lines(a, [json.dumps({"id": d.id, "probs": [0.5]}) for d in dets])
    write_lines(b, [json.dumps({"id": "unknown", "probs": [0.5]})])
    code = cli.main([
        "fuse", "--detections", str(corpus_dir / "detections.jsonl"),
        "--opinions", str(a), "--opinions", str(b), "--out", str(tmp_path / "x.jsonl"),
    ])
    assert code == 1


def test_train_fusion_command(tmp_path):
    rng = np.random.default_rng(5)
    samples = []
    for _ in range(64):
        truth = rng.random() < 0.5
        p1 = float(np.clip((0.9 if truth else 0.1) + rng.normal(0, 0.05), 0, 1))
        p2 = float(np.clip(0.5 + rng.normal(0, 0.05), 0, 1))
        samples.append(FusionSample([p1, p2], SoftLabel.pedestrian(1.0 if truth else 0.0), 0.7))
    data = tmp_path / "samples.jsonl"
    write_lines(data, [serialize_fusion_sample(s) for s in samples])
    out = tmp_path / "net.txt"
    code = cli.main([
        "train-fusion", "--data", str(data), "--out", str(out),
        "--epochs", "5", "--hidden", "8 8", "--seed", "3",
    ])
    assert code == 0
    assert out.read_text().startswith("fusedet-net 1")


def test_fuse_with_trained_network(corpus_dir, tmp_path):
    rng = np.random.default_rng(11)
    samples = [
        FusionSample([float(rng.uniform(0.2, 1)), float(rng.uniform(0.2, 1))],
                     SoftLabel.pedestrian(float(rng.integers(0, 2))), 0.6)
        for _ in range(32)
    ]
    data = tmp_path / "samples.jsonl"
    write_lines(data, [serialize_fusion_sample(s) for s in samples])
    net_path = tmp_path / "net.txt"
    assert cli.main([
        "train-fusion", "--data", str(data), "--out", str(net_path),
        "--epochs", "2", "--hidden", "8 8",
    ]) == 0
    out = tmp_path / "fused.jsonl"
    code = cli.main([
        "fuse", "--detections", str(corpus_dir / "detections.jsonl"),
        "--opinions", str(corpus_dir / "opinions.jsonl"),
        "--model", "network", "--network", str(net_path), "--out", str(out),
    ])
    assert code == 0
    assert len(read_lines(out)) == len(read_lines(corpus_dir / "detections.jsonl"))


def test_segfuse_with_estimated_kernel(corpus_dir, tmp_path):
    out = tmp_path / "segfused.jsonl"
    kernel_out = tmp_path / "kernel.txt"
    code = cli.main([
        "segfuse", "--detections", str(corpus_dir / "detections.jsonl"),
        "--masks", str(corpus_dir / "masks"), "--out", str(out),
        "--mode", "kernel", "--estimate-kernel",
        "--ground-truth", str(corpus_dir / "ground_truth.jsonl"),
        "--kernel-size", "16 8", "--kernel-out", str(kernel_out),
    ])
    assert code == 0
    kernel = read_kernel(kernel_out)
    assert abs(kernel.weights.sum() - 1.0) < 1e-9
    fused = parse_detections(read_lines(out))
    original = parse_detections(read_lines(corpus_dir / "detections.jsonl"))
    assert all(f.score <= o.score + 1e-12 for f, o in zip(fused, original))


def test_segfuse_legacy_mode(corpus_dir, tmp_path):
    out = tmp_path / "segfused.jsonl"
    code = cli.main([
        "segfuse", "--detections", str(corpus_dir / "detections.jsonl"),
        "--masks", str(corpus_dir / "masks"), "--out", str(out), "--mode", "legacy",
    ])
    assert code == 0
    fused = parse_detections(read_lines(out))
    original = parse_detections(read_lines(corpus_dir / "detections.jsonl"))
    # 1e-8 slack: scores pass through the 9-significant-digit codec
    for f, o in zip(fused, original):
        assert o.score * 0.35 - 1e-8 <= f.score <= o.score + 1e-8


def test_eval_command_writes_reports(corpus_dir, tmp_path):
    out = tmp_path / "eval"
    code = cli.main([
        "eval", "--detections", str(corpus_dir / "detections.jsonl"),
        "--ground-truth", str(corpus_dir / "ground_truth.jsonl"),
        "--out", str(out), "--setting", "reasonable", "--setting", "all", "--curves",
    ])
    assert code == 0
    report = (out / "report.txt").read_text()
    assert "reasonable" in report and "all" in report
    csv = (out / "report.csv").read_text().splitlines()
    assert csv[0] == "variant,setting,lamr"
    assert len(csv) == 3
    assert (out / "curve_reasonable.csv").exists()
    svg = (out / "curve_reasonable.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg


def pipeline_ini(tmp_path, corpus_dir, segmode="kernel", model_lines=None) -> Path:
    model = model_lines or ["model = soft-rejection", "t1 = 0.7", "t2 = 0.1"]
    body = "\n".join(
        [
            "[pipeline]",
            f"detections = {corpus_dir / 'detections.jsonl'}",
            f"ground_truth = {corpus_dir / 'ground_truth.jsonl'}",
            f"opinions = {corpus_dir / 'opinions.jsonl'}",
            "settings = reasonable",
            "[fusion]",
            *model,
            "[segfusion]",
            f"mode = {segmode}",
            f"masks = {corpus_dir / 'masks'}",
            "kernel_rows = 16",
            "kernel_cols = 8",
        ]
    )
    path = tmp_path / "pipeline.ini"
    path.write_text(body + "\n")
    return path


def test_pipeline_end_to_end(corpus_dir, tmp_path, capsys):
    ini = pipeline_ini(tmp_path, corpus_dir)
    out = tmp_path / "run"
    assert cli.main(["pipeline", "--config", str(ini), "--out", str(out)]) == 0
    assert (out / "fused_detections.jsonl").exists()
    assert (out / "kernel.txt").exists()
    report = (out / "report.csv").read_text().splitlines()
    assert len(report) == 2 and report[1].startswith("fused,reasonable,")
    assert "reasonable" in capsys.readouterr().out


def test_pipeline_identity_config_preserves_scores(corpus_dir, tmp_path):
    ini = pipeline_ini(tmp_path, corpus_dir, segmode="off",
                       model_lines=["model = weights", "weights = 0 0"])
    out = tmp_path / "run"
    assert cli.main(["pipeline", "--config", str(ini), "--out", str(out)]) == 0
    fused = (out / "fused_detections.jsonl").read_text()
    assert fused == (corpus_dir / "detections.jsonl").read_text()


def test_pipeline_deterministic(corpus_dir, tmp_path):
    ini = pipeline_ini(tmp_path, corpus_dir)
    out1, out2 = tmp_path / "run1", tmp_path / "run2"
    assert cli.main(["pipeline", "--config", str(ini), "--out", str(out1)]) == 0
    assert cli.main(["pipeline", "--config", str(ini), "--out", str(out2)]) == 0
    files1 = sorted(p.relative_to(out1) for p in out1.rglob("*") if p.is_file())
    files2 = sorted(p.relative_to(out2) for p in out2.rglob("*") if p.is_file())
    assert files1 == files2
    for rel in files1:
        assert (out1 / rel).read_bytes() == (out2 / rel).read_bytes()


def test_malformed_detection_line_cites_line(tmp_path, capsys):
    dets = tmp_path / "bad.jsonl"
    dets.write_text(
        '{"image_id":"i","id":"a","class":1,"x":0,"y":0,"w":5,"h":5,"score":0.5}\n'
        '{"image_id":"i","id":"b","class":1,"x":0,"y":0,"w":-5,"h":5,"score":0.5}\n'
    )
    gts = tmp_path / "gt.jsonl"
    gts.write_text('{"image_id":"i","x":0,"y":0,"w":5,"h":60,"occlusion":0,"ignore":false,"class":1}\n')
    code = cli.main([
        "eval", "--detections", str(dets), "--ground-truth", str(gts), "--out", str(tmp_path / "o"),
    ])
    assert code == 1
    assert "line 2" in capsys.readouterr().err


def test_missing_file_is_validation_error(tmp_path, capsys):
    code = cli.main([
        "eval", "--detections", str(tmp_path / "nope.jsonl"),
        "--ground-truth", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o"),
    ])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_bad_usage_exits_one(capsys):
    assert cli.main(["fuse", "--detections", "x"]) == 1
    assert cli.main(["eval", "--setting"]) == 1


def test_unknown_setting_exits_one(corpus_dir, tmp_path, capsys):
    code = cli.main([
        "eval", "--detections", str(corpus_dir / "detections.jsonl"),
        "--ground-truth", str(corpus_dir / "ground_truth.jsonl"),
        "--out", str(tmp_path / "o"), "--setting", "bogus",
    ])
    assert code == 1
    assert "unknown evaluation setting" in capsys.readouterr().err
