"""Single-camera tracking.

Detections are filtered and suppressed per frame, then associated to tracks
with a constant-velocity Kalman filter and a two-stage cascade: appearance
(gated by motion) first, box overlap for whatever is left.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .model_io import BBox, Detection, Tracklet, TrackletObservation
from .numeric import iou, iou_matrix, min_cost_assignment

# 0.95 quantile of the chi-square distribution with 4 degrees of freedom
CHI2_GATE_4DOF = 9.4877


@dataclass
class TrackerConfig:
    conf_thresh: float = 0.1
    area_thresh: float = 750.0
    nms_iou: float = 0.5
    apply_nms: bool = True
    max_age: int = 30
    min_length: int = 2
    n_init: int = 2
    ema_alpha: float = 0.9
    appearance_max_cost: float = 0.4
    iou_max_cost: float = 0.5
    gate: float = CHI2_GATE_4DOF
    std_weight_position: float = 1.0 / 20
    std_weight_velocity: float = 1.0 / 160


# ---------------------------------------------------------------------------
# detection filtering


def nms(dets: Sequence[Detection], iou_thresh: float = 0.5, conf_thresh: float = 0.0) -> list[Detection]:
    """Class-agnostic greedy suppression; output keeps the input order."""
    idx = [i for i, d in enumerate(dets) if d.confidence >= conf_thresh]
    # stable sort: equal confidences keep the lower original index first
    idx.sort(key=lambda i: -dets[i].confidence)
    kept: list[int] = []
    for i in idx:
        if all(iou(dets[i].bbox, dets[k].bbox) <= iou_thresh for k in kept):
            kept.append(i)
    return [dets[i] for i in sorted(kept)]


def filter_detections(dets: Iterable[Detection], conf_thresh: float = 0.1, area_thresh: float = 750.0) -> list[Detection]:
    return [d for d in dets if d.confidence >= conf_thresh and d.bbox.area() >= area_thresh]


# ---------------------------------------------------------------------------
# Kalman filter on (cx, cy, aspect, height) with velocities

_F = np.eye(8)
_F[:4, 4:] = np.eye(4)
_H = np.eye(4, 8)


@dataclass(frozen=True, eq=False)
class KalmanState:
    mean: np.ndarray
    covariance: np.ndarray


def kalman_initiate(box: BBox, std_weight_position: float = 1 / 20, std_weight_velocity: float = 1 / 160) -> KalmanState:
    z = box.xyah()
    mean = np.r_[z, np.zeros(4)]
    h = z[3]
    std = np.array([
        2 * std_weight_position * h, 2 * std_weight_position * h, 1e-2, 2 * std_weight_position * h,
        10 * std_weight_velocity * h, 10 * std_weight_velocity * h, 1e-5, 10 * std_weight_velocity * h,
    ])
    return KalmanState(mean, np.diag(std ** 2))


def kalman_predict(state: KalmanState, std_weight_position: float = 1 / 20, std_weight_velocity: float = 1 / 160) -> KalmanState:
    """Advance one frame under constant velocity.

    Process noise scales with the current height; pass zero weights for a
    noise-free prediction.
    """
    h = state.mean[3]
    pos_noise = [std_weight_position * h, std_weight_position * h, 1e-2 * (std_weight_position > 0), std_weight_position * h]
    vel_noise = [std_weight_velocity * h, std_weight_velocity * h, 1e-5 * (std_weight_velocity > 0), std_weight_velocity * h]
    q = np.diag(np.square(np.r_[pos_noise, vel_noise]))
    mean = _F @ state.mean
    cov = _F @ state.covariance @ _F.T + q
    return KalmanState(mean, cov)


def _measurement_noise(mean: np.ndarray, std_weight_position: float) -> np.ndarray:
    h = mean[3]
    std = [std_weight_position * h, std_weight_position * h, 1e-1, std_weight_position * h]
    return np.diag(np.square(std))


def kalman_project(state: KalmanState, std_weight_position: float = 1 / 20) -> tuple[np.ndarray, np.ndarray]:
    """Measurement-space mean and innovation covariance."""
    mean = _H @ state.mean
    cov = _H @ state.covariance @ _H.T + _measurement_noise(state.mean, std_weight_position)
    return mean, cov + 1e-9 * np.eye(4)


def kalman_update(
    state: KalmanState,
    measurement: BBox | np.ndarray,
    std_weight_position: float = 1 / 20,
    measurement_noise: Optional[np.ndarray] = None,
) -> KalmanState:
    z = measurement.xyah() if isinstance(measurement, BBox) else np.asarray(measurement, dtype=float)
    proj_mean, proj_cov = kalman_project(state, std_weight_position)
    if measurement_noise is not None:
        proj_cov = _H @ state.covariance @ _H.T + measurement_noise + 1e-9 * np.eye(4)
    gain = np.linalg.solve(proj_cov, (state.covariance @ _H.T).T).T
    mean = state.mean + gain @ (z - proj_mean)
    cov = state.covariance - gain @ proj_cov @ gain.T
    cov = (cov + cov.T) / 2
    return KalmanState(mean, cov)


def gating_distance(state: KalmanState, measurements: np.ndarray, std_weight_position: float = 1 / 20) -> np.ndarray:
    """Squared Mahalanobis distance of ``(n, 4)`` xyah measurements under the state."""
    mean, cov = kalman_project(state, std_weight_position)
    d = np.atleast_2d(measurements) - mean
    chol = np.linalg.cholesky(cov)
    z = np.linalg.solve(chol, d.T)
    return np.sum(z * z, axis=0)


# ---------------------------------------------------------------------------
# tracks


class TrackStatus(enum.Enum):
    TENTATIVE = "tentative"
    ACTIVE = "active"
    LOST = "lost"
    REMOVED = "removed"


@dataclass
class Track:
    local_id: int
    state: KalmanState
    smoothed_feature: np.ndarray
    last_frame: int
    status: TrackStatus = TrackStatus.TENTATIVE
    hits: int = 1
    observations: list[TrackletObservation] = field(default_factory=list)

    def update_feature(self, feat: np.ndarray, alpha: float) -> None:
        f = alpha * self.smoothed_feature + (1 - alpha) * feat
        n = np.linalg.norm(f)
        self.smoothed_feature = f / n if n > 0 else feat

    def to_tracklet(self, camera_id: int) -> Tracklet:
        return Tracklet(camera_id, self.local_id, tuple(self.observations))


def cascade_match(
    tracks: Sequence[Track],
    dets: Sequence[Detection],
    cfg: Optional[TrackerConfig] = None,
) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Two-stage association; returns (matches, unmatched track idx, unmatched det idx).

    Stage 1 costs ``1 - cos`` between smoothed track features and detection
    features, forbidding pairs outside the Mahalanobis gate.  Stage 2 matches
    the leftovers on ``1 - IoU`` against the predicted boxes.
    """
    cfg = cfg or TrackerConfig()
    if not tracks or not dets:
        return [], list(range(len(tracks))), list(range(len(dets)))

    feats = np.stack([d.feature for d in dets])
    xyah = np.stack([d.bbox.xyah() for d in dets])
    cost = np.empty((len(tracks), len(dets)))
    for r, tr in enumerate(tracks):
        cost[r] = 1.0 - feats @ tr.smoothed_feature
        gd = gating_distance(tr.state, xyah, cfg.std_weight_position)
        cost[r, gd > cfg.gate] = np.inf
    matches = min_cost_assignment(cost, cfg.appearance_max_cost)

    rem_t = [r for r in range(len(tracks)) if r not in {m[0] for m in matches}]
    rem_d = [c for c in range(len(dets)) if c not in {m[1] for m in matches}]
    if rem_t and rem_d:
        pred_boxes = np.stack([_state_box(tracks[r].state) for r in rem_t])
        det_boxes = np.array([[d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h] for d in (dets[c] for c in rem_d)])
        iou_cost = 1.0 - iou_matrix(pred_boxes, det_boxes)
        for r, c in min_cost_assignment(iou_cost, cfg.iou_max_cost):
            matches.append((rem_t[r], rem_d[c]))
    matches.sort()
    mt, md = {m[0] for m in matches}, {m[1] for m in matches}
    return matches, [r for r in range(len(tracks)) if r not in mt], [c for c in range(len(dets)) if c not in md]


def _state_box(state: KalmanState) -> np.ndarray:
    cx, cy, a, h = state.mean[:4]
    h = max(h, 1e-6)
    w = a * h
    return np.array([cx - w / 2, cy - h / 2, w, h])


class CameraTracker:
    """Sequential tracker for one camera; feed frames in increasing order."""

    def __init__(self, camera_id: int, cfg: Optional[TrackerConfig] = None):
        self.camera_id = camera_id
        self.cfg = cfg or TrackerConfig()
        self.tracks: list[Track] = []
        self.finished: list[Track] = []
        self._next_id = 1
        self._last_frame: Optional[int] = None

    def _predict(self, track: Track, steps: int) -> None:
        for _ in range(steps):
            track.state = kalman_predict(track.state, self.cfg.std_weight_position, self.cfg.std_weight_velocity)

    def step(self, frame: int, dets: Sequence[Detection], det_indices: Optional[Sequence[int]] = None) -> None:
        cfg = self.cfg
        if self._last_frame is not None and frame <= self._last_frame:
            raise ValueError(f"frames must increase: {frame} after {self._last_frame}")
        steps = 1 if self._last_frame is None else frame - self._last_frame
        self._last_frame = frame
        if det_indices is None:
            det_indices = [-1] * len(dets)
        keep = [i for i, d in enumerate(dets) if d.confidence >= cfg.conf_thresh and d.bbox.area() >= cfg.area_thresh]
        if cfg.apply_nms:
            kept = nms([dets[i] for i in keep], cfg.nms_iou)
            kept_ids = {id(d) for d in kept}
            keep = [i for i in keep if id(dets[i]) in kept_ids]
        dets = [dets[i] for i in keep]
        det_indices = [det_indices[i] for i in keep]

        for tr in self.tracks:
            if frame - tr.last_frame > cfg.max_age:
                tr.status = TrackStatus.REMOVED
        self.finished.extend(t for t in self.tracks if t.status is TrackStatus.REMOVED)
        self.tracks = [t for t in self.tracks if t.status is not TrackStatus.REMOVED]
        for tr in self.tracks:
            self._predict(tr, steps)
        matches, unmatched_tracks, unmatched_dets = cascade_match(self.tracks, dets, cfg)

        for r, c in matches:
            tr, d = self.tracks[r], dets[c]
            tr.state = kalman_update(tr.state, d.bbox, cfg.std_weight_position)
            tr.update_feature(d.feature, cfg.ema_alpha)
            tr.observations.append(TrackletObservation(frame, d.bbox, d.feature, det_indices[c]))
            tr.last_frame = frame
            tr.hits += 1
            if tr.status is TrackStatus.LOST or (tr.status is TrackStatus.TENTATIVE and tr.hits >= cfg.n_init):
                tr.status = TrackStatus.ACTIVE
        for r in unmatched_tracks:
            tr = self.tracks[r]
            if tr.status is TrackStatus.TENTATIVE:
                tr.status = TrackStatus.REMOVED
            elif tr.status is TrackStatus.ACTIVE:
                tr.status = TrackStatus.LOST
            if tr.status is TrackStatus.LOST and frame - tr.last_frame > cfg.max_age:
                tr.status = TrackStatus.REMOVED
        for c in unmatched_dets:
            d = dets[c]
            tr = Track(
                self._next_id,
                kalman_initiate(d.bbox, cfg.std_weight_position, cfg.std_weight_velocity),
                d.feature.copy(),
                frame,
                observations=[TrackletObservation(frame, d.bbox, d.feature, det_indices[c])],
            )
            if cfg.n_init <= 1:
                tr.status = TrackStatus.ACTIVE
            self._next_id += 1
            self.tracks.append(tr)

        self.finished.extend(t for t in self.tracks if t.status is TrackStatus.REMOVED)
        self.tracks = [t for t in self.tracks if t.status is not TrackStatus.REMOVED]

    def finish(self) -> list[Tracklet]:
        """Close every track and return the tracklets long enough to keep, ordered by id."""
        done = self.finished + self.tracks
        self.tracks, self.finished = [], []
        done.sort(key=lambda t: t.local_id)
        return [
            t.to_tracklet(self.camera_id)
            for t in done
            if len(t.observations) >= self.cfg.min_length and t.hits >= self.cfg.n_init
        ]


def track_camera(
    frames: Mapping[int, Sequence[Detection]] | Iterable[tuple[int, Sequence[Detection]]],
    cfg: Optional[TrackerConfig] = None,
    camera_id: Optional[int] = None,
    det_indices: Optional[Mapping[int, Sequence[int]]] = None,
) -> list[Tracklet]:
    """Run the tracker over detections grouped by frame."""
    items = sorted(frames.items()) if isinstance(frames, Mapping) else list(frames)
    if camera_id is None:
        camera_id = next((d.camera_id for _, ds in items for d in ds), 0)
    tracker = CameraTracker(camera_id, cfg)
    for frame, dets in items:
        tracker.step(frame, dets, None if det_indices is None else det_indices.get(frame))
    return tracker.finish()


def track_all(detections: Sequence[Detection], cfg: Optional[TrackerConfig] = None) -> list[Tracklet]:
    """Group ingested detections by camera and frame and track each camera independently."""
    by_cam: dict[int, dict[int, list[int]]] = {}
    for i, d in enumerate(detections):
        by_cam.setdefault(d.camera_id, {}).setdefault(d.frame, []).append(i)
    out = []
    for cam in sorted(by_cam):
        frames = by_cam[cam]
        grouped = {f: [detections[i] for i in idx] for f, idx in frames.items()}
        out.extend(track_camera(grouped, cfg, cam, frames))
    return out
