"""Command-line entry point: ``bmlesion <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import pipeline
from .config import ToolConfig, load_config
from .errors import BMError
from .formats import read_annotations, read_predictions, write_csv
from .losses import LOSS_KINDS, anchor_cls_loss, finite_diff_check, random_instance
from .synthetic import write_synthetic

log = logging.getLogger("bmlesion")

GRADCHECK_TOL = 1e-4


def _floats(s: str) -> list[float]:
    try:
        return [float(p) for p in s.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def _config(args: argparse.Namespace) -> ToolConfig:
    cfg = load_config(getattr(args, "config", None))
    overrides = {}
    if getattr(args, "variant", None):
        overrides["bm_variant"] = args.variant
    if getattr(args, "fppi", None):
        overrides["fppi_targets"] = tuple(args.fppi)
    if getattr(args, "match_iou", None) is not None:
        overrides["match_iou"] = args.match_iou
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


def cmd_gen_maps(args: argparse.Namespace) -> int:
    cfg = _config(args)
    records = read_annotations(args.annotations)
    written = pipeline.gen_maps(records, args.out, cfg.bm_variant, args.render, args.jobs)
    log.info("wrote %d files for %d images to %s", len(written), len(records), args.out)
    return 0


def cmd_label_anchors(args: argparse.Namespace) -> int:
    cfg = _config(args)
    records = read_annotations(args.annotations)
    n = pipeline.label_anchors(records, cfg, args.out, args.jobs)
    log.info("labelled %d anchors over %d images", n, len(records))
    return 0


def cmd_roi_targets(args: argparse.Namespace) -> int:
    cfg = _config(args)
    records = read_annotations(args.annotations)
    rois = pipeline.read_rois(args.rois)
    n = pipeline.roi_targets(records, rois, args.out, cfg, args.jobs)
    log.info("wrote %d ROI targets to %s", n, args.out)
    return 0


def cmd_loss(args: argparse.Namespace) -> int:
    cfg = _config(args)
    report = pipeline.evaluate_loss(args.inputs, cfg)
    text = pipeline.format_report(report)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _config(args)
    records = read_annotations(args.annotations)
    dets = read_predictions(args.predictions)
    curve, sens = pipeline.evaluate_froc(records, dets, cfg.match_iou, cfg.fppi_targets)
    table = pipeline.sensitivity_table(cfg.fppi_targets, sens)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "froc.csv", ("threshold", "fppi", "sensitivity"), pipeline.curve_rows(curve))
        (out / "sensitivity.txt").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    rng = np.random.default_rng(args.seed)
    ok = True
    for kind in LOSS_KINDS:
        worst = max(finite_diff_check(random_instance(kind, rng), h=args.step) for _ in range(args.trials))
        passed = worst < GRADCHECK_TOL
        ok &= passed
        print(f"{kind:<11} max_rel_err={worst:.3e} {'PASS' if passed else 'FAIL'}")

    # drop-out anchors must carry no gradient at all
    labels = np.array([-1.0, 0.0, 0.7, -1.0])
    _, g = anchor_cls_loss(rng.uniform(size=4), labels)
    dropout_ok = bool(np.all(g[labels == -1.0] == 0.0))
    ok &= dropout_ok
    print(f"dropout     zero_gradient={dropout_ok} {'PASS' if dropout_ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_synth(args: argparse.Namespace) -> int:
    paths = write_synthetic(args.out, n_images=args.images, size=args.size, seed=args.seed)
    for k, p in paths.items():
        log.info("%s: %s", k, p)
    return 0


def cmd_synth_batch(args: argparse.Namespace) -> int:
    cfg = _config(args)
    n_a, n_r = pipeline.make_loss_batch(args.labels, args.roi_dir, args.out, cfg, args.noise)
    log.info("batch with %d anchors and %d ROIs in %s", n_a, n_r, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bmlesion", description="Bounding-map target and evaluation tools.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, fn, help: str, config: bool = True, jobs: bool = False) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        p.set_defaults(func=fn)
        if config:
            p.add_argument("--config", help="key = value config file")
        if jobs:
            p.add_argument("--jobs", type=int, default=1, help="worker processes (output order is fixed)")
        return p

    p = add("gen-maps", cmd_gen_maps, "write BM_x / BM_y / BM_xy maps per image", jobs=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=("linear", "gaussian"))
    p.add_argument("--render", action="store_true", help="also write PGM images")

    p = add("label-anchors", cmd_label_anchors, "graded anchor labels as CSV", jobs=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)

    p = add("roi-targets", cmd_roi_targets, "BM-branch ground truth per ROI", jobs=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--rois", required=True)
    p.add_argument("--out", required=True)

    p = add("loss", cmd_loss, "evaluate the full loss on a serialized batch")
    p.add_argument("--inputs", required=True, help="batch directory with anchors.csv [rois.csv]")
    p.add_argument("--out")

    p = add("eval", cmd_eval, "FROC curve and sensitivity at FPPI")
    p.add_argument("--annotations", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--fppi", type=_floats)
    p.add_argument("--match-iou", type=float)
    p.add_argument("--out", help="directory for froc.csv and sensitivity.txt")

    p = add("gradcheck", cmd_gradcheck, "finite-difference gradient verification", config=False)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)

    p = add("synth", cmd_synth, "write a synthetic annotation/prediction/ROI set", config=False)
    p.add_argument("--out", required=True)
    p.add_argument("--images", type=int, default=20)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)

    p = add("synth-batch", cmd_synth_batch, "assemble a loss batch from label/ROI outputs")
    p.add_argument("--labels", required=True)
    p.add_argument("--roi-dir")
    p.add_argument("--out", required=True)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (BMError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
