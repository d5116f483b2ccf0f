"""
Occupancy toolkit command line

Entry point:
    python main.py eval --pred pred.occk --gt gt.occk --mask mask.occk
    python main.py ensemble --inputs a.occk b.occk --output out.occk
    python main.py det2occ --boxes boxes.jsonl --output det.occk
    python main.py cutout --input imgs.occk --output out.occk
    python main.py selfcheck [--quick]

Exit status: 0 success, 1 a self-check failed, 2 usage, format or
validation error.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

sys.path.insert(0, os.path.dirname(__file__))

from src import __version__
from src.errors import ConfigError, OccError, ShapeError
from src.grid import LabelGrid, ProbGrid, VoxelMask
from src.io import (
    FORMAT_VERSION,
    load_run_config,
    load_spec,
    load_thresholds,
    read_boxes,
    read_grid,
    read_images,
    read_params,
    write_grid,
    write_images,
)
from src.metrics import format_report
from src.pipeline import OccupancyPipeline
from src.selfcheck import run_selfcheck
from src.utils import atomic_write, setup_logging

logger = logging.getLogger("main")


def build_pipeline(args) -> OccupancyPipeline:
    config = load_run_config(args.config)
    spec = load_spec(args.spec) if args.spec is not None else None
    return OccupancyPipeline(config, spec)


def _expect(grid, kinds, path: str):
    kinds = kinds if isinstance(kinds, tuple) else (kinds,)
    if not isinstance(grid, kinds):
        expected = " or ".join(k.__name__ for k in kinds)
        raise ShapeError(f"{path} holds a {type(grid).__name__}, expected {expected}")
    return grid


def cmd_eval(args) -> int:
    """Score a prediction and print its mIoU."""
    pipeline = build_pipeline(args)
    pred = _expect(read_grid(args.pred), (LabelGrid, ProbGrid), args.pred)
    gt = _expect(read_grid(args.gt), LabelGrid, args.gt)
    mask = _expect(read_grid(args.mask), VoxelMask, args.mask) if args.mask else None

    strict_zero = True if args.strict_zero else None
    report = pipeline.evaluate(pred, gt, mask, strict_zero=strict_zero)

    if args.report:
        with atomic_write(args.report, "w") as f:
            json.dump(report.to_json_dict(), f, indent=2)
            f.write("\n")
    print(f"{report.miou:.4f}" if report.miou is not None else "nan")
    if args.table:
        print(format_report(report))
    return 0


def _conversion(pipeline: OccupancyPipeline, args):
    thresholds = load_thresholds(args.thresholds) if args.thresholds else None
    return pipeline.conversion_config(
        thresholds,
        spacing_t=args.t,
        dynamic_only=True if args.dynamic_only else None,
    )


def cmd_pipeline_ensemble(args) -> int:
    """Fuse occupancy grids, with detection boxes as an extra model when given."""
    pipeline = build_pipeline(args)
    grids = [_expect(read_grid(p), ProbGrid, p) for p in args.inputs]
    boxes = read_boxes(args.boxes, pipeline.spec.num_classes) if args.boxes else None
    conversion = _conversion(pipeline, args) if boxes is not None else None

    if pipeline.config.stages:
        flags = {"--weights": args.weights, "--strategy": args.strategy, "--det-weight": args.det_weight}
        conflicting = [flag for flag, value in flags.items() if value is not None]
        if conflicting:
            raise ConfigError(f"{', '.join(conflicting)} cannot be used with configured stages; set them per stage")
        sources = {Path(p).stem: g for p, g in zip(args.inputs, grids)}
        if len(sources) != len(grids):
            raise ShapeError("input file names must have distinct stems to name stage sources")
        if boxes is not None:
            sources["det"] = pipeline.convert_detections(boxes, conversion)
        results = pipeline.run_stages(sources)
        fused = results[pipeline.config.stages[-1].name]
    else:
        fused = pipeline.ensemble(
            grids,
            weights=args.weights,
            strategy=args.strategy,
            boxes=boxes,
            det_weight=args.det_weight,
            conversion=conversion,
        )
    write_grid(args.output, fused)
    return 0


def cmd_det2occ(args) -> int:
    """Convert detection boxes to a probability grid."""
    pipeline = build_pipeline(args)
    boxes = read_boxes(args.boxes, pipeline.spec.num_classes)
    grid = pipeline.convert_detections(boxes, _conversion(pipeline, args))
    write_grid(args.output, grid)
    return 0


def cmd_cutout(args) -> int:
    """Apply cutout to a camera image set."""
    pipeline = build_pipeline(args)
    imgs = read_images(args.input)
    spec = pipeline.cutout_spec(
        imgs.h, imgs.w,
        num_holes=args.holes, size_fraction=args.size, seed=args.seed, fill=args.fill,
    )
    write_images(args.output, pipeline.cutout(imgs, spec))
    return 0


def cmd_selfcheck(args) -> int:
    """Run the verification suites; 0 only if all pass."""
    params = read_params(args.params) if args.params else None
    results = run_selfcheck(quick=args.quick, params=params)
    for result in results:
        print(result.line())
    errors = [r.max_rel_error for r in results if r.max_rel_error is not None]
    if errors:
        print(f"max gradient relative error: {max(errors):.3e}")
    failed = [r.name for r in results if not r.passed]
    print("selfcheck: " + ("PASS" if not failed else f"FAIL ({', '.join(failed)})"))
    return 0 if not failed else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Run configuration JSON; explicit flags override it")
    common.add_argument(
        "--spec",
        help='Grid spec: "default" for the challenge volume or a JSON file (default: from --config)',
    )
    common.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Log level for messages on stderr (default: WARNING)",
    )
    common.add_argument("--log-file", help="Also write log messages to this file")

    parser = argparse.ArgumentParser(
        description="Semantic occupancy toolkit",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Grids, masks, parameters and image sets use the OCCK container
(docs/FILE_FORMATS.md). Detection boxes are JSON lines.

Examples:
  python main.py eval --pred pred.occk --gt gt.occk --mask cam.occk --report r.json
  python main.py ensemble --inputs a.occk b.occk c.occk --weights 1 1 2 \\
      --boxes dets.jsonl --det-weight 2 --output fused.occk
  python main.py det2occ --boxes dets.jsonl --t 0.2 --thresholds thr.json --output det.occk
  python main.py cutout --input imgs.occk --holes 1 --size 0.25 --seed 42 --output out.occk
  python main.py selfcheck --quick
        """,
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"occupancy toolkit {__version__}, OCCK format v{FORMAT_VERSION}",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", parents=[common], help="Masked per-class IoU and mIoU")
    p.add_argument("--pred", required=True, help="Predicted labels or probabilities")
    p.add_argument("--gt", required=True, help="Ground-truth labels")
    p.add_argument("--mask", help="Camera mask; all voxels when omitted")
    p.add_argument("--report", help="Write the IoU report JSON here")
    p.add_argument("--strict-zero", action="store_true", help="Count classes with an empty union as 0")
    p.add_argument("--table", action="store_true", help="Print the per-class table after the mIoU")
    p.set_defaults(func=cmd_eval)

    def add_det2occ_flags(p):
        p.add_argument("--t", type=float, help="Lattice spacing in meters (default 0.2)")
        p.add_argument("--thresholds", help="Per-class score thresholds JSON")
        p.add_argument("--dynamic-only", action="store_true", help="Keep boxes of dynamic classes only")

    p = sub.add_parser("ensemble", parents=[common], help="Fuse probability grids")
    p.add_argument("--inputs", nargs="+", required=True, help="Probability grids to fuse")
    p.add_argument("--weights", nargs="+", type=float, help="One weight per input (default uniform)")
    p.add_argument("--strategy", choices=["weighted", "max", "vote"], help="Fusion rule (default weighted)")
    p.add_argument("--boxes", help="Detection boxes JSONL to convert and join the ensemble")
    p.add_argument("--det-weight", type=float, help="Weight of the detection grid (default 1.0)")
    add_det2occ_flags(p)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_pipeline_ensemble)

    p = sub.add_parser("det2occ", parents=[common], help="Detection boxes to a probability grid")
    p.add_argument("--boxes", required=True, help="Detection boxes JSONL")
    add_det2occ_flags(p)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_det2occ)

    p = sub.add_parser("cutout", parents=[common], help="Cutout on a camera image set")
    p.add_argument("--input", required=True, help="Image set (OCCK kind 5 or 6)")
    p.add_argument("--holes", type=int, help="Holes per image (default 1)")
    p.add_argument("--size", type=float, help="Hole size as a fraction of the image dims (default 0.25)")
    p.add_argument("--seed", type=int, help="64-bit sampler seed (default 0)")
    p.add_argument("--fill", type=float, help="Value written into holes (default 0)")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_cutout)

    p = sub.add_parser("selfcheck", parents=[common], help="Run the verification suites")
    p.add_argument("--quick", action="store_true", help="One seed, sampled gradient entries")
    p.add_argument("--params", help="Check gradients at parameters from this OCCK archive")
    p.set_defaults(func=cmd_selfcheck)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(args.log_level, args.log_file)
    try:
        return args.func(args)
    except OccError as e:
        logger.debug("Command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except (ValueError, KeyError, OSError) as e:
        logger.debug("Command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
