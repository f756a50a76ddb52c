"""Pipeline orchestration and the module ablation harness.

Stages run in a fixed order: single-camera tracking, zone endpoints,
tracklet filtering, direction mask, appearance affinity, clustering,
global ids, evaluation.  Each matching module can be switched off:

========  =========================================================
flag      when off
========  =========================================================
tfs       no tracklet filtering
dbtm      all-ones mask
rerank    raw averaged-feature cosine (no camera-bias removal,
          neighbour update or k-reciprocal re-ranking)
scac      one agglomeration over all tracklets
========  =========================================================
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .affinity import AffinityConfig, build_affinity, emit_matrix_csv
from .evalkit import metric_report, write_report
from .model_io import (
    CameraTopology,
    Detection,
    GlobalTrajectory,
    Tracklet,
    ZoneMap,
    emit_submission,
    emit_tracklets,
    parse_detections,
    parse_records,
    parse_topology,
    parse_tracklets,
    parse_zone_map,
    trajectories_to_records,
)
from .scac import MatchGraph, assign_global_ids, global_cluster, inter_cam_cluster, inter_zone_cluster
from .sct import TrackerConfig, track_all
from .zones import annotate_endpoints, build_dbtm, emit_mask_csv, tfs_filter

log = logging.getLogger(__name__)

ABLATION_ROWS = ("baseline", "+TFS", "+DBTM", "+Rerank", "+SCAC")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class Paths:
    detections: Optional[str] = None
    features: Optional[str] = None
    zones: Optional[str] = None
    topology: Optional[str] = None
    gt: Optional[str] = None
    out_dir: str = "out"


@dataclass
class Flags:
    tfs: bool = True
    dbtm: bool = True
    rerank: bool = True
    scac: bool = True


@dataclass
class ClusterConfig:
    # distance threshold 0.2 for both phases
    inter_zone_threshold: float = 0.2
    inter_cam_threshold: float = 0.2
    include_single_camera: bool = False


@dataclass
class EvalConfig:
    iou_thresh: float = 0.5
    multi_cam_gt_only: bool = False


@dataclass
class PipelineConfig:
    paths: Paths = field(default_factory=Paths)
    # detector filter defaults: confidence 0.1, area 750 px
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    affinity: AffinityConfig = field(default_factory=AffinityConfig)
    clustering: ClusterConfig = field(default_factory=ClusterConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    flags: Flags = field(default_factory=Flags)
    feature_dim: Optional[int] = None
    debug_dumps: bool = False

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Optional[Path] = None) -> "PipelineConfig":
        sections = {"paths": Paths, "tracker": TrackerConfig, "affinity": AffinityConfig,
                    "clustering": ClusterConfig, "eval": EvalConfig, "flags": Flags}
        kwargs = {}
        for key, value in raw.items():
            if key in sections:
                known = {f.name for f in dataclasses.fields(sections[key])}
                unknown = set(value) - known
                if unknown:
                    raise ValueError(f"config section '{key}': unknown keys {sorted(unknown)}")
                kwargs[key] = sections[key](**value)
            elif key in ("feature_dim", "debug_dumps"):
                kwargs[key] = value
            else:
                raise ValueError(f"unknown config key '{key}'")
        cfg = cls(**kwargs)
        if base_dir is not None:
            for f in dataclasses.fields(Paths):
                p = getattr(cfg.paths, f.name)
                if p is not None and not Path(p).is_absolute():
                    setattr(cfg.paths, f.name, str(Path(base_dir) / p))
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base_dir=path.parent)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class Inputs:
    detections: list[Detection]
    zone_map: ZoneMap
    topology: CameraTopology
    gt: Optional[list] = None


@dataclass
class MatchResult:
    tracklets: list[Tracklet]  # after endpoints and filtering
    mask: np.ndarray
    similarity: np.ndarray
    masked_similarity: np.ndarray
    partition: list[list[int]]
    trajectories: list[GlobalTrajectory]
    graph: MatchGraph


def load_inputs(cfg: PipelineConfig) -> Inputs:
    p = cfg.paths
    for name in ("detections", "features", "zones", "topology"):
        if getattr(p, name) is None:
            raise ValueError(f"paths.{name} is not set")
    dets = parse_detections(p.detections, p.features, cfg.feature_dim)
    gt = parse_records(p.gt) if p.gt else None
    return Inputs(dets, parse_zone_map(p.zones), parse_topology(p.topology), gt)


def _sct_key(cfg: PipelineConfig) -> str:
    h = hashlib.sha256()
    h.update(Path(cfg.paths.detections).read_bytes())
    h.update(Path(cfg.paths.features).read_bytes())
    h.update(json.dumps(dataclasses.asdict(cfg.tracker), sort_keys=True).encode())
    return h.hexdigest()[:16]


def run_sct(cfg: PipelineConfig, detections: Sequence[Detection], cache: bool = True) -> list[Tracklet]:
    """Track every camera, reusing a cached dump keyed by input and tracker config content."""
    cache_file = None
    if cache and cfg.paths.detections and cfg.paths.features:
        cache_file = Path(cfg.paths.out_dir) / "cache" / f"sct-{_sct_key(cfg)}.jsonl"
        if cache_file.exists():
            return parse_tracklets(cache_file, detections)
    tracklets = track_all(detections, cfg.tracker)
    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        emit_tracklets(tracklets, cache_file)
    return tracklets


def run_mtmct(
    tracklets: Sequence[Tracklet],
    zone_map: ZoneMap,
    topology: CameraTopology,
    cfg: PipelineConfig,
    flags: Optional[Flags] = None,
) -> MatchResult:
    flags = flags or cfg.flags
    stage = "zones"
    try:
        trs = annotate_endpoints(tracklets, zone_map)
        if flags.tfs:
            trs = tfs_filter(trs)
        stage = "dbtm"
        mask = build_dbtm(trs, topology) if flags.dbtm else np.ones((len(trs), len(trs)), dtype=np.int8)
        stage = "affinity"
        aff = cfg.affinity if flags.rerank else dataclasses.replace(
            cfg.affinity, bias_normalize=False, neighbor_k=0, rerank=False)
        feats, sim, s_hat = build_affinity(trs, mask, aff)
        stage = "clustering"
        graph = MatchGraph(len(trs))
        if not trs:
            partition = []
        elif flags.scac:
            local, graph = inter_zone_cluster(trs, s_hat, mask, topology, cfg.clustering.inter_zone_threshold,
                                              feats, graph)
            partition = inter_cam_cluster(trs, local, feats, mask, cfg.clustering.inter_cam_threshold, aff, graph)
        else:
            partition = global_cluster(trs, s_hat, mask, cfg.clustering.inter_cam_threshold, graph)
        trajectories = assign_global_ids(partition, trs, cfg.clustering.include_single_camera)
    except Exception as exc:
        raise PipelineError(stage, exc) from exc
    if len(topology) < 2:
        log.warning("single-camera topology: no cross-camera trajectories possible")
    return MatchResult(trs, mask, sim, s_hat, partition, trajectories, graph)


def evaluate(cfg: PipelineConfig, gt, trajectories: Sequence[GlobalTrajectory]) -> dict:
    pred = trajectories_to_records(trajectories)
    return metric_report(gt, pred, cfg.eval.iou_thresh, cfg.eval.multi_cam_gt_only)


def _write_outputs(cfg: PipelineConfig, result: MatchResult, report: Optional[dict]) -> list[Path]:
    out = Path(cfg.paths.out_dir)
    written = [out / "submission.txt", out / "merges.jsonl"]
    emit_submission(result.trajectories, written[0])
    result.graph.dump(written[1], result.tracklets)
    if report is not None:
        written.append(out / "report.json")
        write_report(report, written[-1])
    if cfg.debug_dumps:
        written += [out / "mask.csv", out / "similarity.csv", out / "similarity_masked.csv"]
        emit_mask_csv(result.mask, written[-3])
        emit_matrix_csv(result.similarity, written[-2])
        emit_matrix_csv(result.masked_similarity, written[-1])
    return written


def run_pipeline(cfg: PipelineConfig) -> Optional[dict]:
    """Run every stage, write submission (and report when ground truth is given), return the report."""
    out = Path(cfg.paths.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    stage = "load"
    try:
        inputs = load_inputs(cfg)
        stage = "sct"
        tracklets = run_sct(cfg, inputs.detections)
        result = run_mtmct(tracklets, inputs.zone_map, inputs.topology, cfg)
        stage = "eval"
        report = evaluate(cfg, inputs.gt, result.trajectories) if inputs.gt is not None else None
        stage = "emit"
        written = _write_outputs(cfg, result, report)
        return report
    except Exception as exc:
        for p in written + [out / "submission.txt", out / "report.json", out / "merges.jsonl"]:
            p.unlink(missing_ok=True)
        if isinstance(exc, PipelineError):
            raise
        raise PipelineError(stage, exc) from exc


def ablation_flags() -> list[tuple[str, Flags]]:
    """Modules switched on cumulatively, in table order."""
    steps = []
    on: dict[str, bool] = {"tfs": False, "dbtm": False, "rerank": False, "scac": False}
    steps.append((ABLATION_ROWS[0], Flags(**on)))
    for name, key in zip(ABLATION_ROWS[1:], ("tfs", "dbtm", "rerank", "scac")):
        on[key] = True
        steps.append((name, Flags(**on)))
    return steps


def run_ablation(cfg: PipelineConfig, inputs: Optional[Inputs] = None) -> list[dict]:
    """One shared tracking run, then the matching stages under each cumulative flag set."""
    try:
        inputs = inputs or load_inputs(cfg)
    except Exception as exc:
        raise PipelineError("load", exc) from exc
    if inputs.gt is None:
        raise PipelineError("load", ValueError("ablation needs ground truth (paths.gt)"))
    try:
        tracklets = run_sct(cfg, inputs.detections, cache=cfg.paths.detections is not None)
    except Exception as exc:
        raise PipelineError("sct", exc) from exc
    rows = []
    for name, flags in ablation_flags():
        result = run_mtmct(tracklets, inputs.zone_map, inputs.topology, cfg, flags)
        report = evaluate(cfg, inputs.gt, result.trajectories)
        if not result.trajectories:
            log.warning("%s: no cross-camera trajectories produced", name)
        rows.append({"method": name, **report, "trajectories": len(result.trajectories)})
    return rows


def format_ablation(rows: Sequence[dict]) -> str:
    lines = ["| Method | IDF1 | IDP | IDR | Precision | Recall |", "|---|---|---|---|---|---|"]
    for r in rows:
        lines.append(
            f"| {r['method']} | {100 * r['idf1']:.2f} | {100 * r['idp']:.2f} | {100 * r['idr']:.2f} | "
            f"{100 * r['precision']:.2f} | {100 * r['recall']:.2f} |"
        )
    return "\n".join(lines) + "\n"


def write_ablation(rows: Sequence[dict], out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.json").write_text(json.dumps(list(rows), indent=2) + "\n")
    (out / "ablation.md").write_text(format_ablation(rows))


def clean_cache(out_dir) -> None:
    shutil.rmtree(Path(out_dir) / "cache", ignore_errors=True)
