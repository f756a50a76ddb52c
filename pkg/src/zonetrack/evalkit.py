"""Identity metrics (IDF1, IDP, IDR) and detection precision/recall over box records."""
from __future__ import annotations

import json
import warnings
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .model_io import BoxRecord
from .numeric import iou_matrix, min_cost_assignment


@dataclass(frozen=True)
class IdCounts:
    idtp: int
    idfp: int
    idfn: int


def _by_frame(records: Sequence[BoxRecord]) -> dict[tuple[int, int], tuple[np.ndarray, np.ndarray]]:
    groups: dict[tuple[int, int], list[BoxRecord]] = defaultdict(list)
    for r in records:
        groups[(r.camera_id, r.frame)].append(r)
    return {
        key: (np.array([r.obj_id for r in rows]), np.array([[r.x, r.y, r.w, r.h] for r in rows], dtype=float))
        for key, rows in groups.items()
    }


def multi_camera_only(records: Sequence[BoxRecord]) -> list[BoxRecord]:
    """Keep records of ids seen by at least two cameras."""
    cams: dict[int, set] = defaultdict(set)
    for r in records:
        cams[r.obj_id].add(r.camera_id)
    return [r for r in records if len(cams[r.obj_id]) >= 2]


def overlap_counts(gt: Sequence[BoxRecord], pred: Sequence[BoxRecord], iou_thresh: float = 0.5):
    """Per (gt id, pred id), the number of camera-frames where their boxes overlap by ``iou_thresh``.

    Returns ``(gt_ids, pred_ids, counts, gt_sizes, pred_sizes)``.
    """
    gt_ids = sorted({r.obj_id for r in gt})
    pred_ids = sorted({r.obj_id for r in pred})
    gi = {g: k for k, g in enumerate(gt_ids)}
    pi = {p: k for k, p in enumerate(pred_ids)}
    counts = np.zeros((len(gt_ids), len(pred_ids)), dtype=np.int64)
    gt_sizes = np.zeros(len(gt_ids), dtype=np.int64)
    pred_sizes = np.zeros(len(pred_ids), dtype=np.int64)
    for r in gt:
        gt_sizes[gi[r.obj_id]] += 1
    for r in pred:
        pred_sizes[pi[r.obj_id]] += 1
    gframes, pframes = _by_frame(gt), _by_frame(pred)
    for key, (g_ids, g_boxes) in gframes.items():
        if key not in pframes:
            continue
        p_ids, p_boxes = pframes[key]
        hit = iou_matrix(g_boxes, p_boxes) >= iou_thresh
        for a, b in zip(*np.nonzero(hit)):
            counts[gi[g_ids[a]], pi[p_ids[b]]] += 1
    return gt_ids, pred_ids, counts, gt_sizes, pred_sizes


def _ratio(num: int, den: int, empty: float) -> float:
    return num / den if den else empty


def id_metrics(
    gt: Sequence[BoxRecord],
    pred: Sequence[BoxRecord],
    iou_thresh: float = 0.5,
    multi_cam_gt_only: bool = False,
) -> tuple[float, float, float, IdCounts]:
    """IDF1, IDP, IDR and the underlying counts.

    Ground-truth and predicted ids are paired one-to-one so that the number
    of identity-consistent matched boxes (IDTP) is as large as possible;
    every other box is an IDFP (predicted) or IDFN (ground truth).
    """
    if multi_cam_gt_only:
        gt = multi_camera_only(gt)
    if not gt and not pred:
        return 1.0, 1.0, 1.0, IdCounts(0, 0, 0)
    _, _, counts, gt_sizes, pred_sizes = overlap_counts(gt, pred, iou_thresh)
    idtp = 0
    if counts.size:
        pairs = min_cost_assignment(counts.max() - counts)
        idtp = int(sum(counts[r, c] for r, c in pairs))
    counts_ = IdCounts(idtp, int(pred_sizes.sum()) - idtp, int(gt_sizes.sum()) - idtp)
    idf1 = _ratio(2 * idtp, 2 * idtp + counts_.idfp + counts_.idfn, 1.0)
    idp = _ratio(idtp, idtp + counts_.idfp, 1.0)
    idr = _ratio(idtp, idtp + counts_.idfn, 1.0)
    return idf1, idp, idr, counts_


def detection_pr(gt: Sequence[BoxRecord], pred: Sequence[BoxRecord], iou_thresh: float = 0.5) -> tuple[float, float]:
    """Box-level precision and recall, ids ignored, greedy highest-IoU-first matching per camera-frame."""
    if not gt and not pred:
        return 1.0, 1.0
    tp = 0
    gframes, pframes = _by_frame(gt), _by_frame(pred)
    for key, (_, g_boxes) in gframes.items():
        if key not in pframes:
            continue
        ious = iou_matrix(g_boxes, pframes[key][1])
        order = np.argsort(-ious, axis=None, kind="stable")
        used_g, used_p = set(), set()
        for flat in order:
            a, b = divmod(int(flat), ious.shape[1])
            if ious[a, b] < iou_thresh:
                break
            if a in used_g or b in used_p:
                continue
            used_g.add(a)
            used_p.add(b)
            tp += 1
    if not pred:
        warnings.warn("no predicted boxes; precision reported as 1.0")
        precision = 1.0
    else:
        precision = tp / len(pred)
    recall = tp / len(gt) if gt else 1.0
    return precision, recall


def metric_report(gt: Sequence[BoxRecord], pred: Sequence[BoxRecord], iou_thresh: float = 0.5,
                  multi_cam_gt_only: bool = False) -> dict:
    if multi_cam_gt_only:
        gt = multi_camera_only(gt)
    idf1, idp, idr, c = id_metrics(gt, pred, iou_thresh)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        precision, recall = detection_pr(gt, pred, iou_thresh)
    return {
        "idf1": idf1, "idp": idp, "idr": idr,
        "precision": precision, "recall": recall,
        "idtp": c.idtp, "idfp": c.idfp, "idfn": c.idfn,
    }


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=False) + "\n")
