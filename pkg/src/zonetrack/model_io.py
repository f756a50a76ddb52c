"""Domain types and file formats.

Formats
-------
detections file
    One detection per line: ``camera_id frame x y w h confidence class``.
    Frames are 0-based.
features file
    One line of ``d`` space separated reals per detection line, same order.
zone map
    JSON ``{"<camera_id>": {"1": [[x, y], ...], "2": ..., "3": ..., "4": ...}}``.
topology
    JSON array of camera ids in driving order.
submission / ground truth
    ``camera_id global_id frame x y w h -1 -1`` per line.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

import numpy as np

CLASS_LABELS = ("car", "truck", "bus")
ZONE_LABELS = (1, 2, 3, 4)


class FormatError(ValueError):
    """Raised for malformed input files; the message names the offending location."""


@dataclass(frozen=True)
class BBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"bbox needs positive size, got w={self.w} h={self.h}")

    def area(self) -> float:
        return self.w * self.h

    def xyxy(self) -> np.ndarray:
        return np.array([self.x, self.y, self.x + self.w, self.y + self.h], dtype=float)

    def xyah(self) -> np.ndarray:
        """Center x, center y, aspect ratio w/h, height."""
        return np.array([self.x + self.w / 2, self.y + self.h / 2, self.w / self.h, self.h], dtype=float)

    def anchor(self) -> tuple[float, float]:
        """Bottom-center point, where the vehicle touches the road."""
        return (self.x + self.w / 2, self.y + self.h)

    @classmethod
    def from_xyah(cls, xyah: Sequence[float]) -> "BBox":
        cx, cy, a, h = (float(v) for v in xyah)
        w = a * h
        return cls(cx - w / 2, cy - h / 2, w, h)


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Return ``v / ||v||``; vectors already of unit norm are returned unchanged.

    Leaving unit vectors untouched makes the operation exactly idempotent, so
    features survive an emit/parse round trip bit for bit.
    """
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("cannot normalize a zero vector")
    if abs(n - 1.0) <= 1e-12:
        return v
    return v / n


@dataclass(frozen=True, eq=False)
class Detection:
    camera_id: int
    frame: int
    bbox: BBox
    confidence: float
    feature: np.ndarray
    class_label: str = "car"

    def __eq__(self, other):
        if not isinstance(other, Detection):
            return NotImplemented
        return (
            self.camera_id == other.camera_id
            and self.frame == other.frame
            and self.bbox == other.bbox
            and self.confidence == other.confidence
            and self.class_label == other.class_label
            and np.array_equal(self.feature, other.feature)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class TrackletObservation:
    t: int
    b: BBox
    f: np.ndarray
    # row of the source detection in the ingested detections/features files, -1 if unknown
    source_index: int = -1


@dataclass(frozen=True)
class TrackletEndpoints:
    z_s: int
    z_e: int
    t_s: int
    t_e: int


@dataclass(frozen=True, eq=False)
class Tracklet:
    camera_id: int
    local_id: int
    observations: tuple[TrackletObservation, ...]
    endpoints: Optional[TrackletEndpoints] = None

    def __post_init__(self):
        if not self.observations:
            raise ValueError("a tracklet needs at least one observation")
        ts = [o.t for o in self.observations]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"tracklet {self.camera_id}/{self.local_id}: times must strictly increase")

    def __len__(self):
        return len(self.observations)

    @property
    def t_start(self) -> int:
        return self.observations[0].t

    @property
    def t_end(self) -> int:
        return self.observations[-1].t

    def features(self) -> np.ndarray:
        return np.stack([o.f for o in self.observations])

    def with_endpoints(self, endpoints: Optional[TrackletEndpoints]) -> "Tracklet":
        return replace(self, endpoints=endpoints)


@dataclass(frozen=True)
class CameraTopology:
    cameras: tuple[int, ...]

    def __post_init__(self):
        if len(self.cameras) < 1:
            raise ValueError("topology needs at least one camera")
        if len(set(self.cameras)) != len(self.cameras):
            raise ValueError(f"duplicate camera ids in topology {self.cameras}")

    def index(self, camera_id: int) -> int:
        return self.cameras.index(camera_id)

    def __len__(self):
        return len(self.cameras)


@dataclass(frozen=True)
class ZoneMap:
    # camera_id -> {label: (n, 2) polygon vertices}
    zones: Mapping[int, Mapping[int, np.ndarray]]

    def for_camera(self, camera_id: int) -> Mapping[int, np.ndarray]:
        return self.zones[camera_id]

    def cameras(self) -> list[int]:
        return sorted(self.zones)


@dataclass
class GlobalTrajectory:
    global_id: int
    members: list[tuple[int, Tracklet]] = field(default_factory=list)

    def cameras(self) -> list[int]:
        return [c for c, _ in self.members]


class BoxRecord(NamedTuple):
    """One row of a submission or ground-truth file."""

    camera_id: int
    obj_id: int
    frame: int
    x: float
    y: float
    w: float
    h: float


# ---------------------------------------------------------------------------
# detections


def _fmt(x: float) -> str:
    # repr gives the shortest string that round-trips a float64 exactly
    return repr(float(x))


def parse_detections(path, features_path, dim: Optional[int] = None) -> list[Detection]:
    """Read a detections file and its companion features file.

    Features are L2-normalized on the way in.  ``dim`` pins the expected
    feature dimension; when omitted it is taken from the first feature row.
    """
    path, features_path = Path(path), Path(features_path)
    det_lines = [ln for ln in path.read_text().splitlines()]
    feat_lines = [ln for ln in features_path.read_text().splitlines()]
    det_rows = [(i, ln) for i, ln in enumerate(det_lines, 1) if ln.strip()]
    feat_rows = [(i, ln) for i, ln in enumerate(feat_lines, 1) if ln.strip()]
    if len(det_rows) != len(feat_rows):
        raise FormatError(
            f"{path}: {len(det_rows)} detections but {features_path} has {len(feat_rows)} feature rows"
        )
    out = []
    for (lineno, line), (flineno, fline) in zip(det_rows, feat_rows):
        parts = line.split()
        if len(parts) != 8:
            raise FormatError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
        try:
            cam, frame = int(parts[0]), int(parts[1])
            x, y, w, h, conf = (float(p) for p in parts[2:7])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        label = parts[7]
        if frame < 0:
            raise FormatError(f"{path}:{lineno}: negative frame {frame}")
        if not (w > 0 and h > 0):
            raise FormatError(f"{path}:{lineno}: non-positive box size w={w} h={h}")
        if not 0.0 <= conf <= 1.0:
            raise FormatError(f"{path}:{lineno}: confidence {conf} outside [0, 1]")
        if label not in CLASS_LABELS:
            raise FormatError(f"{path}:{lineno}: unknown class {label!r}")
        try:
            feat = np.array([float(v) for v in fline.split()], dtype=float)
        except ValueError as exc:
            raise FormatError(f"{features_path}:{flineno}: {exc}") from None
        if dim is None:
            dim = feat.size
        if feat.size != dim:
            raise FormatError(f"{features_path}:{flineno}: feature dimension {feat.size} != {dim}")
        if not np.any(feat):
            raise FormatError(f"{features_path}:{flineno}: zero feature vector")
        out.append(Detection(cam, frame, BBox(x, y, w, h), conf, l2_normalize(feat), label))
    return out


def emit_detections(detections: Iterable[Detection], path, features_path) -> None:
    det_lines, feat_lines = [], []
    for d in detections:
        b = d.bbox
        det_lines.append(
            f"{d.camera_id} {d.frame} {_fmt(b.x)} {_fmt(b.y)} {_fmt(b.w)} {_fmt(b.h)} "
            f"{_fmt(d.confidence)} {d.class_label}"
        )
        feat_lines.append(" ".join(_fmt(v) for v in d.feature))
    _write_lines(path, det_lines)
    _write_lines(features_path, feat_lines)


def _write_lines(path, lines: Sequence[str]) -> None:
    path = Path(path)
    try:
        path.write_text("".join(ln + "\n" for ln in lines))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# zones and topology


def _segments_intersect(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        v = float((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        return (v > 0) - (v < 0)

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    o1, o2, o3, o4 = orient(p1, p2, p3), orient(p1, p2, p4), orient(p3, p4, p1), orient(p3, p4, p2)
    if o1 != o2 and o3 != o4:
        return True
    return (
        (o1 == 0 and on_seg(p1, p2, p3))
        or (o2 == 0 and on_seg(p1, p2, p4))
        or (o3 == 0 and on_seg(p3, p4, p1))
        or (o4 == 0 and on_seg(p3, p4, p2))
    )


def is_simple_polygon(poly: np.ndarray) -> bool:
    """True when no two non-adjacent edges touch and there is no zero-length edge."""
    n = len(poly)
    edges = [(poly[i], poly[(i + 1) % n]) for i in range(n)]
    if any(np.array_equal(a, b) for a, b in edges):
        return False
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(*edges[i], *edges[j]):
                return False
    return True


def parse_zone_map(path) -> ZoneMap:
    path = Path(path)
    try:
        # keep duplicate keys visible instead of letting the last one win
        raw = json.loads(path.read_text(), object_pairs_hook=list)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if not isinstance(raw, list) or not all(isinstance(v, list) for _, v in raw):
        raise FormatError(f"{path}: expected a JSON object keyed by camera id")
    zones: dict[int, dict[int, np.ndarray]] = {}
    for cam_key, labels in raw:
        cam = int(cam_key)
        if cam in zones:
            raise FormatError(f"{path}: camera {cam} listed twice")
        per_cam: dict[int, np.ndarray] = {}
        for label_key, verts in labels:
            label = int(label_key)
            if label not in ZONE_LABELS:
                raise FormatError(f"{path}: camera {cam}: unknown zone label {label}")
            if label in per_cam:
                raise FormatError(f"{path}: camera {cam}: duplicate zone label {label}")
            poly = np.asarray(verts, dtype=float)
            if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
                raise FormatError(f"{path}: camera {cam} zone {label}: need at least 3 [x, y] vertices")
            if np.array_equal(poly[0], poly[-1]) and len(poly) > 3:
                poly = poly[:-1]
            if not is_simple_polygon(poly):
                raise FormatError(f"{path}: camera {cam} zone {label}: polygon is self-intersecting")
            per_cam[label] = poly
        for label in ZONE_LABELS:
            if label not in per_cam:
                raise FormatError(f"{path}: camera {cam}: missing zone label {label}")
        zones[cam] = dict(sorted(per_cam.items()))
    return ZoneMap(zones)


def emit_zone_map(zone_map: ZoneMap, path) -> None:
    raw = {
        str(cam): {str(label): [[float(x), float(y)] for x, y in poly] for label, poly in zone_map.zones[cam].items()}
        for cam in zone_map.cameras()
    }
    Path(path).write_text(json.dumps(raw, indent=1) + "\n")


def parse_topology(path) -> CameraTopology:
    path = Path(path)
    raw = json.loads(path.read_text())
    if not isinstance(raw, list) or not all(isinstance(c, int) for c in raw):
        raise FormatError(f"{path}: topology must be a JSON array of integer camera ids")
    try:
        return CameraTopology(tuple(raw))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def emit_topology(topology: CameraTopology, path) -> None:
    Path(path).write_text(json.dumps(list(topology.cameras)) + "\n")


# ---------------------------------------------------------------------------
# submissions / ground truth


def trajectories_to_records(trajectories: Iterable[GlobalTrajectory]) -> list[BoxRecord]:
    rows = []
    for traj in trajectories:
        for cam, tracklet in traj.members:
            for ob in tracklet.observations:
                rows.append(BoxRecord(cam, traj.global_id, ob.t, ob.b.x, ob.b.y, ob.b.w, ob.b.h))
    rows.sort(key=lambda r: (r.camera_id, r.frame, r.obj_id))
    return rows


def emit_records(records: Iterable[BoxRecord], path) -> None:
    rows = sorted(records, key=lambda r: (r.camera_id, r.frame, r.obj_id))
    _write_lines(
        path,
        [f"{r.camera_id} {r.obj_id} {r.frame} {_fmt(r.x)} {_fmt(r.y)} {_fmt(r.w)} {_fmt(r.h)} -1 -1" for r in rows],
    )


def emit_submission(trajectories: Iterable[GlobalTrajectory], path) -> None:
    """Write one line per (camera, global id, frame), sorted by camera then frame."""
    emit_records(trajectories_to_records(trajectories), path)


def parse_records(path) -> list[BoxRecord]:
    """Read a submission or ground-truth file."""
    path = Path(path)
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) not in (7, 9):
            raise FormatError(f"{path}:{lineno}: expected 9 fields, got {len(parts)}")
        try:
            cam, oid, frame = int(parts[0]), int(parts[1]), int(parts[2])
            x, y, w, h = (float(p) for p in parts[3:7])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        if not (w > 0 and h > 0):
            raise FormatError(f"{path}:{lineno}: non-positive box size")
        rows.append(BoxRecord(cam, oid, frame, x, y, w, h))
    return rows


parse_submission = parse_records
parse_ground_truth = parse_records


# ---------------------------------------------------------------------------
# per-camera tracklet dump


def emit_tracklets(tracklets: Iterable[Tracklet], path) -> None:
    """JSON lines ``{camera, local_id, obs: [{t, bbox, feature_index}]}``."""
    lines = []
    for tr in tracklets:
        obs = [
            {"t": o.t, "bbox": [o.b.x, o.b.y, o.b.w, o.b.h], "feature_index": o.source_index}
            for o in tr.observations
        ]
        lines.append(json.dumps({"camera": tr.camera_id, "local_id": tr.local_id, "obs": obs}))
    _write_lines(path, lines)


def parse_tracklets(path, detections: Sequence[Detection]) -> list[Tracklet]:
    """Rebuild tracklets from a dump, taking features from the ingested detections."""
    path = Path(path)
    out = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        obs = []
        for o in rec["obs"]:
            idx = o["feature_index"]
            if not 0 <= idx < len(detections):
                raise FormatError(f"{path}:{lineno}: feature_index {idx} out of range")
            obs.append(TrackletObservation(o["t"], BBox(*o["bbox"]), detections[idx].feature, idx))
        out.append(Tracklet(rec["camera"], rec["local_id"], tuple(obs)))
    return out
