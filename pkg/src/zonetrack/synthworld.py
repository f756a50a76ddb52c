"""Deterministic synthetic crossroad worlds with ground truth.

Cameras form a chain along a main road.  Every camera sees the same
crossroad layout in a 1000x600 image:

* zone 4, left arm of the main road (toward the previous camera)
* zone 3, right arm (toward the next camera)
* zones 1 and 2, the side road above and below the main road

Main-road vehicles drive left to right (forward, increasing camera index)
in the upper lane or right to left (reverse) in the lower lane.  Side-road
vehicles cross from zone 1 to zone 2 or back and never reach another camera.
Static false positives sit in one zone for the whole video.

Appearance embeddings are ``normalize(identity_mean + camera_bias + view_offset + noise)``
where the view offset is fixed for one object's pass through one camera.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .model_io import (
    BBox,
    BoxRecord,
    CameraTopology,
    Detection,
    ZoneMap,
    emit_detections,
    emit_records,
    emit_topology,
    emit_zone_map,
)

IMAGE_W, IMAGE_H = 1000.0, 600.0
ZONE_POLYGONS = {
    1: [[400.0, 0.0], [600.0, 0.0], [600.0, 180.0], [400.0, 180.0]],
    2: [[400.0, 480.0], [600.0, 480.0], [600.0, 600.0], [400.0, 600.0]],
    3: [[700.0, 240.0], [1000.0, 240.0], [1000.0, 460.0], [700.0, 460.0]],
    4: [[0.0, 240.0], [300.0, 240.0], [300.0, 460.0], [0.0, 460.0]],
}
FORWARD_LANE_Y = 320.0  # anchor (bottom edge) of forward vehicles
REVERSE_LANE_Y = 420.0
ROAD_X = (40.0, 960.0)  # anchor x range while visible
SIDE_ROAD_X = 500.0
SIDE_ROAD_Y = (70.0, 590.0)
CAR_W, CAR_H = 64.0, 40.0
SIDE_W, SIDE_H = 40.0, 64.0
FP_W, FP_H = 40.0, 30.0
# anchors of static false positives, each inside a zone and clear of every lane
FP_SLOTS = [(850.0, 265.0), (150.0, 265.0), (450.0, 150.0), (570.0, 560.0), (750.0, 265.0), (250.0, 265.0)]
CAMERA_ID_BASE = 41
CLEARANCE = 12.0  # minimum pixel gap between any two objects in a frame

FORWARD, REVERSE = 1, -1


class ConfigError(ValueError):
    pass


@dataclass
class WorldConfig:
    n_cameras: int = 3
    n_vehicles: int = 10
    frame_count: int = 800
    transit_time_range: tuple[int, int] = (20, 60)
    embedding_dim: int = 64
    # angle (radians) between the means of look-alike identity pairs
    identity_separation: float = math.pi / 2
    per_camera_bias_magnitude: float = 0.0
    feature_noise_sigma: float = 0.0
    # magnitude of a fixed appearance offset drawn per (object, camera) pass: viewpoint change
    view_change_magnitude: float = 0.0
    bbox_noise_sigma: float = 0.0
    false_positive_count: int = 0
    side_road_vehicle_count: int = 0
    detection_drop_rate: float = 0.0
    seed: int = 0
    reverse_fraction: float = 0.0
    speed_range: tuple[float, float] = (8.0, 14.0)
    # shortest camera run of a main-road vehicle; None means the whole chain
    min_route_cameras: Optional[int] = None
    name: str = "custom"

    def validate(self) -> None:
        counts = (self.n_cameras, self.n_vehicles, self.frame_count, self.false_positive_count,
                  self.side_road_vehicle_count, self.embedding_dim)
        if any(c < 0 for c in counts):
            raise ConfigError("counts must be non-negative")
        if self.n_cameras < 1:
            raise ConfigError("need at least one camera")
        for p in (self.detection_drop_rate, self.reverse_fraction):
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"probability {p} outside [0, 1]")
        lo, hi = self.transit_time_range
        if lo < 0 or hi < lo:
            raise ConfigError(f"bad transit_time_range {self.transit_time_range}")
        if self.speed_range[0] <= 0 or self.speed_range[1] < self.speed_range[0]:
            raise ConfigError(f"bad speed_range {self.speed_range}")
        if self.false_positive_count > len(FP_SLOTS) * self.n_cameras:
            raise ConfigError(
                f"{self.false_positive_count} static false positives do not fit in "
                f"{len(FP_SLOTS) * self.n_cameras} slots"
            )
        if self.min_route_cameras is not None and not 1 <= self.min_route_cameras <= self.n_cameras:
            raise ConfigError("min_route_cameras must lie in [1, n_cameras]")

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        d = dict(d)
        for key in ("transit_time_range", "speed_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def stress_preset(name: str = "stress-v1") -> WorldConfig:
    """Named, versioned world where every matching stage has something to fix."""
    if name != "stress-v1":
        raise KeyError(f"unknown preset {name!r}")
    return WorldConfig(
        n_cameras=6,
        n_vehicles=40,
        frame_count=2000,
        transit_time_range=(20, 80),
        embedding_dim=64,
        identity_separation=0.35,
        per_camera_bias_magnitude=0.4,
        feature_noise_sigma=0.06,
        view_change_magnitude=0.4,
        bbox_noise_sigma=1.0,
        false_positive_count=12,
        side_road_vehicle_count=24,
        detection_drop_rate=0.03,
        seed=2021,
        reverse_fraction=0.5,
        speed_range=(8.0, 14.0),
        min_route_cameras=None,
        name="stress-v1",
    )


@dataclass
class Pass:
    """One object's visit to one camera."""

    object_id: int
    kind: str  # "vehicle", "side", "static"
    camera_id: int
    frames: np.ndarray
    boxes: np.ndarray  # (n, 4) x, y, w, h


@dataclass
class World:
    config: WorldConfig
    topology: CameraTopology
    zone_map: ZoneMap
    detections: list[Detection]
    ground_truth: list[BoxRecord]
    passes: list[Pass]
    identity_means: np.ndarray  # rows: main-road vehicles, then side-road, then distractors
    camera_biases: dict[int, np.ndarray]
    # per detection: appearance identity row and the embedding before normalization
    det_identity: np.ndarray = field(default=None)
    raw_features: np.ndarray = field(default=None)

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "detections": out / "detections.txt",
            "features": out / "features.txt",
            "zones": out / "zones.json",
            "topology": out / "topology.json",
            "gt": out / "gt.txt",
            "manifest": out / "manifest.json",
        }
        emit_detections(self.detections, paths["detections"], paths["features"])
        emit_zone_map(self.zone_map, paths["zones"])
        emit_topology(self.topology, paths["topology"])
        emit_records(self.ground_truth, paths["gt"])
        manifest = {
            "generator": "zonetrack.synthworld",
            "config": asdict(self.config),
            "files": {k: p.name for k, p in paths.items() if k != "manifest"},
            "n_detections": len(self.detections),
            "n_gt_records": len(self.ground_truth),
            "gt_passes": self.gt_pass_count(),
            "detections_sha256": hashlib.sha256(paths["detections"].read_bytes()).hexdigest(),
        }
        paths["manifest"].write_text(json.dumps(manifest, indent=2) + "\n")
        return paths

    def gt_pass_count(self) -> int:
        return sum(1 for p in self.passes if p.kind == "vehicle")


def _random_unit(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def _lookalike(rng: np.random.Generator, base: np.ndarray, angle: float) -> np.ndarray:
    """Unit vector at ``angle`` from ``base`` in a random direction."""
    w = rng.standard_normal(base.size)
    w -= (w @ base) * base
    w /= np.linalg.norm(w)
    return math.cos(angle) * base + math.sin(angle) * w


def _expand(box: np.ndarray, margin: float) -> np.ndarray:
    return np.array([box[0] - margin, box[1] - margin, box[2] + 2 * margin, box[3] + 2 * margin])


def _overlaps(a: np.ndarray, b: np.ndarray) -> bool:
    return (min(a[0] + a[2], b[0] + b[2]) > max(a[0], b[0])) and (min(a[1] + a[3], b[1] + b[3]) > max(a[1], b[1]))


class _Occupancy:
    """Boxes already placed, per (camera, frame), for collision checks."""

    def __init__(self):
        self.cells: dict[tuple[int, int], list[np.ndarray]] = {}

    def free(self, cam: int, frames: np.ndarray, boxes: np.ndarray) -> bool:
        for f, b in zip(frames, boxes):
            eb = _expand(b, CLEARANCE / 2)
            for other in self.cells.get((cam, int(f)), ()):
                if _overlaps(eb, _expand(other, CLEARANCE / 2)):
                    return False
        return True

    def add(self, cam: int, frames: np.ndarray, boxes: np.ndarray) -> None:
        for f, b in zip(frames, boxes):
            self.cells.setdefault((cam, int(f)), []).append(b)


def _road_pass(t0: int, speed: float, direction: int) -> tuple[np.ndarray, np.ndarray]:
    span = ROAD_X[1] - ROAD_X[0]
    n = int(math.floor(span / speed)) + 1
    frames = t0 + np.arange(n)
    dx = speed * np.arange(n)
    if direction == FORWARD:
        ax, ay = ROAD_X[0] + dx, FORWARD_LANE_Y
    else:
        ax, ay = ROAD_X[1] - dx, REVERSE_LANE_Y
    boxes = np.column_stack([ax - CAR_W / 2, np.full(n, ay - CAR_H), np.full(n, CAR_W), np.full(n, CAR_H)])
    return frames, boxes


def _side_pass(t0: int, speed: float, downward: bool) -> tuple[np.ndarray, np.ndarray]:
    span = SIDE_ROAD_Y[1] - SIDE_ROAD_Y[0]
    n = int(math.floor(span / speed)) + 1
    frames = t0 + np.arange(n)
    dy = speed * np.arange(n)
    ay = SIDE_ROAD_Y[0] + dy if downward else SIDE_ROAD_Y[1] - dy
    boxes = np.column_stack([np.full(n, SIDE_ROAD_X - SIDE_W / 2), ay - SIDE_H, np.full(n, SIDE_W), np.full(n, SIDE_H)])
    return frames, boxes


def _place_vehicle(rng, cfg: WorldConfig, cameras: list[int], occ: _Occupancy, vid: int, tries: int = 400):
    n_cam = len(cameras)
    direction = REVERSE if rng.random() < cfg.reverse_fraction else FORWARD
    if cfg.min_route_cameras is None:
        lo_k, hi_k = 0, n_cam - 1
    else:
        length = int(rng.integers(cfg.min_route_cameras, n_cam + 1))
        lo_k = int(rng.integers(0, n_cam - length + 1))
        hi_k = lo_k + length - 1
    order = list(range(lo_k, hi_k + 1))
    if direction == REVERSE:
        order.reverse()
    speed = float(rng.uniform(*cfg.speed_range))
    gaps = [int(rng.integers(cfg.transit_time_range[0], cfg.transit_time_range[1] + 1)) for _ in order[1:]]
    _, proto = _road_pass(0, speed, direction)
    duration = len(proto) * len(order) + sum(gaps)
    latest = cfg.frame_count - duration
    if latest < 0:
        raise ConfigError(f"vehicle {vid}: route of {duration} frames exceeds frame_count {cfg.frame_count}")
    for _ in range(tries):
        t = int(rng.integers(0, latest + 1))
        plan = []
        for step, k in enumerate(order):
            frames, boxes = _road_pass(t, speed, direction)
            plan.append((cameras[k], frames, boxes))
            t = int(frames[-1]) + 1 + (gaps[step] if step < len(gaps) else 0)
        if all(occ.free(c, f, b) for c, f, b in plan):
            for c, f, b in plan:
                occ.add(c, f, b)
            return plan
    raise ConfigError(f"infeasible geometry: cannot place vehicle {vid} without collisions; "
                      "raise frame_count or lower the vehicle count")


def generate(cfg: WorldConfig) -> World:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    cameras = [CAMERA_ID_BASE + k for k in range(cfg.n_cameras)]
    topology = CameraTopology(tuple(cameras))
    polys = {lab: np.array(p) for lab, p in ZONE_POLYGONS.items()}
    zone_map = ZoneMap({c: dict(polys) for c in cameras})
    d = cfg.embedding_dim

    # appearance: main-road identities come in look-alike pairs
    means = []
    for v in range(cfg.n_vehicles):
        means.append(_random_unit(rng, d) if v % 2 == 0 else _lookalike(rng, means[v - 1], cfg.identity_separation))
    for s in range(cfg.side_road_vehicle_count):
        base = means[s % cfg.n_vehicles] if cfg.n_vehicles else _random_unit(rng, d)
        means.append(_lookalike(rng, base, cfg.identity_separation))
    n_distractors = math.ceil(cfg.false_positive_count / cfg.n_cameras) if cfg.false_positive_count else 0
    for _ in range(n_distractors):
        means.append(_random_unit(rng, d))
    means = np.array(means).reshape(-1, d)
    biases = {c: cfg.per_camera_bias_magnitude * _random_unit(rng, d) for c in cameras}

    occ = _Occupancy()
    passes: list[Pass] = []
    # static false positives go first so moving objects are routed around them
    for k in range(cfg.false_positive_count):
        cam = cameras[k % cfg.n_cameras]
        ax, ay = FP_SLOTS[k // cfg.n_cameras]
        frames = np.arange(cfg.frame_count)
        box = np.array([ax - FP_W / 2, ay - FP_H, FP_W, FP_H])
        boxes = np.tile(box, (cfg.frame_count, 1))
        occ.add(cam, frames, boxes)
        passes.append(Pass(cfg.n_vehicles + cfg.side_road_vehicle_count + k // cfg.n_cameras, "static", cam, frames, boxes))
    for v in range(cfg.n_vehicles):
        for cam, frames, boxes in _place_vehicle(rng, cfg, cameras, occ, v):
            passes.append(Pass(v, "vehicle", cam, frames, boxes))
    for s in range(cfg.side_road_vehicle_count):
        speed = float(rng.uniform(*cfg.speed_range))
        downward = bool(rng.random() < 0.5)
        cam = cameras[int(rng.integers(0, cfg.n_cameras))]
        _, proto = _side_pass(0, speed, downward)
        for _ in range(400):
            t0 = int(rng.integers(0, cfg.frame_count - len(proto) + 1))
            frames, boxes = _side_pass(t0, speed, downward)
            if occ.free(cam, frames, boxes):
                occ.add(cam, frames, boxes)
                passes.append(Pass(cfg.n_vehicles + s, "side", cam, frames, boxes))
                break
        else:
            raise ConfigError(f"infeasible geometry: cannot place side-road vehicle {s}")

    view_offsets = [cfg.view_change_magnitude * _random_unit(rng, d) for _ in passes]

    # emit detections in (camera, frame, pass) order
    rows = []
    for p_idx, p in enumerate(passes):
        for f, b in zip(p.frames, p.boxes):
            rows.append((p.camera_id, int(f), p_idx, b))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))

    labels = ("car", "truck", "bus")
    class_of = {p.object_id: labels[int(rng.integers(0, 3))] for p in passes}
    detections, det_identity, raw = [], [], []
    for cam, f, p_idx, b in rows:
        p = passes[p_idx]
        if cfg.detection_drop_rate > 0 and rng.random() < cfg.detection_drop_rate:
            continue
        box = b.copy()
        if cfg.bbox_noise_sigma > 0:
            box += rng.normal(0.0, cfg.bbox_noise_sigma, 4)
            box[2:] = np.maximum(box[2:], 1.0)
        feat = means[p.object_id] + biases[cam] + view_offsets[p_idx]
        if cfg.feature_noise_sigma > 0:
            feat = feat + rng.normal(0.0, cfg.feature_noise_sigma, d)
        conf = 0.5 if p.kind == "static" else 0.9
        raw.append(feat)
        det_identity.append(p.object_id)
        detections.append(Detection(cam, f, BBox(*(float(v) for v in box)), conf, feat / np.linalg.norm(feat),
                                    class_of[p.object_id]))

    gt = [
        BoxRecord(p.camera_id, p.object_id + 1, int(f), *(float(v) for v in b))
        for p in passes if p.kind == "vehicle"
        for f, b in zip(p.frames, p.boxes)
    ]
    gt.sort(key=lambda r: (r.camera_id, r.frame, r.obj_id))
    return World(cfg, topology, zone_map, detections, gt, passes, means, biases,
                 np.array(det_identity, dtype=int), np.array(raw).reshape(-1, d))
