"""Command line entry point: ``zonetrack <subcommand> [--config PATH] [--seed N] [--out DIR]``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import evalkit, pipeline, synthworld
from .model_io import emit_submission, emit_tracklets, parse_records, parse_tracklets

log = logging.getLogger("zonetrack")


def _pipeline_cfg(args) -> pipeline.PipelineConfig:
    cfg = pipeline.PipelineConfig.load(args.config) if args.config else pipeline.PipelineConfig()
    if args.out:
        cfg.paths.out_dir = args.out
    return cfg


def cmd_synth(args) -> int:
    if args.config:
        world_cfg = synthworld.WorldConfig.from_dict(json.loads(Path(args.config).read_text()))
    else:
        world_cfg = synthworld.stress_preset(args.preset)
    if args.seed is not None:
        world_cfg = dataclasses.replace(world_cfg, seed=args.seed)
    out = Path(args.out or "world")
    world = synthworld.generate(world_cfg)
    paths = world.write(out)
    # a ready-to-run pipeline config next to the generated files
    run_cfg = {"paths": {k: paths[k].name for k in ("detections", "features", "zones", "topology", "gt")}
               | {"out_dir": "run"}}
    (out / "pipeline.json").write_text(json.dumps(run_cfg, indent=2) + "\n")
    print(f"wrote {len(world.detections)} detections, {world.gt_pass_count()} ground-truth passes to {out}")
    return 0


def cmd_sct(args) -> int:
    cfg = _pipeline_cfg(args)
    inputs = pipeline.load_inputs(cfg)
    tracklets = pipeline.run_sct(cfg, inputs.detections)
    out = Path(cfg.paths.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emit_tracklets(tracklets, out / "tracklets.jsonl")
    print(f"{len(tracklets)} tracklets -> {out / 'tracklets.jsonl'}")
    return 0


def cmd_mtmct(args) -> int:
    cfg = _pipeline_cfg(args)
    inputs = pipeline.load_inputs(cfg)
    out = Path(cfg.paths.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.tracklets:
        tracklets = parse_tracklets(args.tracklets, inputs.detections)
    else:
        tracklets = pipeline.run_sct(cfg, inputs.detections)
    result = pipeline.run_mtmct(tracklets, inputs.zone_map, inputs.topology, cfg)
    emit_submission(result.trajectories, out / "submission.txt")
    result.graph.dump(out / "merges.jsonl", result.tracklets)
    print(f"{len(result.trajectories)} cross-camera trajectories -> {out / 'submission.txt'}")
    return 0


def cmd_eval(args) -> int:
    cfg = _pipeline_cfg(args)
    gt_path = args.gt or cfg.paths.gt
    pred_path = args.pred or str(Path(cfg.paths.out_dir) / "submission.txt")
    if gt_path is None:
        raise ValueError("no ground truth given (--gt or paths.gt)")
    report = evalkit.metric_report(parse_records(gt_path), parse_records(pred_path),
                                   cfg.eval.iou_thresh, cfg.eval.multi_cam_gt_only)
    out = Path(cfg.paths.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    evalkit.write_report(report, out / "report.json")
    print(json.dumps(report, indent=2))
    return 0


def cmd_ablate(args) -> int:
    cfg = _pipeline_cfg(args)
    rows = pipeline.run_ablation(cfg)
    pipeline.write_ablation(rows, cfg.paths.out_dir)
    print(pipeline.format_ablation(rows), end="")
    return 0


def cmd_pipeline(args) -> int:
    cfg = _pipeline_cfg(args)
    report = pipeline.run_pipeline(cfg)
    if report is not None:
        print(json.dumps(report, indent=2))
    return 0


COMMANDS = {
    "synth": (cmd_synth, "generate a synthetic world"),
    "sct": (cmd_sct, "single-camera tracking only"),
    "mtmct": (cmd_mtmct, "cross-camera matching from detections or a tracklet dump"),
    "eval": (cmd_eval, "score a submission against ground truth"),
    "ablate": (cmd_ablate, "module ablation table"),
    "pipeline": (cmd_pipeline, "all stages end to end"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zonetrack", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config (pipeline config; world config for synth)")
        p.add_argument("--seed", type=int, help="random seed (synth)")
        p.add_argument("--out", help="output directory")
        if name == "synth":
            p.add_argument("--preset", default="stress-v1")
        if name == "mtmct":
            p.add_argument("--tracklets", help="tracklet dump to start from")
        if name == "eval":
            p.add_argument("--gt")
            p.add_argument("--pred")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    func = COMMANDS[args.command][0]
    try:
        return func(args)
    except pipeline.PipelineError as exc:
        print(f"zonetrack {args.command}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"zonetrack {args.command}: stage '{args.command}' failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
