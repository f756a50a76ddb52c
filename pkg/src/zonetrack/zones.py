"""Crossroad zones: zone lookup, tracklet endpoints, tracklet filtering and the direction mask.

Zone semantics per camera: 1 and 2 are the side road crossing the main road,
3 leads to the next camera along the main road, 4 to the previous one.
"""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .model_io import BBox, CameraTopology, Tracklet, TrackletEndpoints, ZoneMap

_EDGE_EPS = 1e-9


def point_in_polygon(x: float, y: float, poly: np.ndarray) -> bool:
    """Even-odd ray casting; points on an edge or vertex count as inside."""
    n = len(poly)
    inside = False
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        # on-edge test: collinear and within the segment's bounding box
        cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
        if (
            abs(cross) <= _EDGE_EPS * max(1.0, abs(x2 - x1) + abs(y2 - y1))
            and min(x1, x2) - _EDGE_EPS <= x <= max(x1, x2) + _EDGE_EPS
            and min(y1, y2) - _EDGE_EPS <= y <= max(y1, y2) + _EDGE_EPS
        ):
            return True
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_cross:
                inside = not inside
    return inside


def assign_zone(b: BBox, camera_zones: Mapping[int, np.ndarray]) -> Optional[int]:
    """Zone label containing the box's bottom-center anchor; lowest label wins, None if outside."""
    x, y = b.anchor()
    for label in sorted(camera_zones):
        if point_in_polygon(x, y, camera_zones[label]):
            return label
    return None


def compute_endpoints(tracklet: Tracklet, camera_zones: Mapping[int, np.ndarray]) -> Optional[TrackletEndpoints]:
    """Start/end zone from the first/last zoned observation; None when no observation is zoned."""
    labels = [assign_zone(o.b, camera_zones) for o in tracklet.observations]
    zoned = [z for z in labels if z is not None]
    if not zoned:
        return None
    return TrackletEndpoints(zoned[0], zoned[-1], tracklet.t_start, tracklet.t_end)


def annotate_endpoints(tracklets: Sequence[Tracklet], zone_map: ZoneMap) -> list[Tracklet]:
    out = []
    for tr in tracklets:
        if tr.camera_id not in zone_map.zones:
            out.append(tr.with_endpoints(None))
        else:
            out.append(tr.with_endpoints(compute_endpoints(tr, zone_map.for_camera(tr.camera_id))))
    return out


def tfs_filter(tracklets: Sequence[Tracklet]) -> list[Tracklet]:
    """Drop tracklets that never change zone, only cross the side road, or have no zone at all."""
    kept = []
    for tr in tracklets:
        ep = tr.endpoints
        if ep is None or ep.z_s == ep.z_e or {ep.z_s, ep.z_e} == {1, 2}:
            continue
        kept.append(tr)
    return kept


def _conflict_ordered(ei: TrackletEndpoints, ci: int, ej: TrackletEndpoints, cj: int) -> bool:
    if ei.z_s in (1, 2) and ej.t_e < ei.t_s:
        return True
    if ei.z_s == 3 and cj > ci and ej.t_e > ei.t_s:
        return True
    if ei.z_s == 4 and cj < ci and ej.t_e > ei.t_s:
        return True
    if ei.z_e in (1, 2) and ej.t_s > ei.t_e:
        return True
    if ei.z_e == 3 and cj > ci and ej.t_s < ei.t_e:
        return True
    if ei.z_e == 4 and cj < ci and ej.t_s < ei.t_e:
        return True
    return False


def conflict(ti: Tracklet, tj: Tracklet, topology: CameraTopology) -> bool:
    """Whether the two tracklets' zones, camera order and times rule out a match.

    Camera order is position in the topology.  Same-camera pairs and pairs
    lacking endpoints never conflict here.
    """
    if ti.camera_id == tj.camera_id or ti.endpoints is None or tj.endpoints is None:
        return False
    ci, cj = topology.index(ti.camera_id), topology.index(tj.camera_id)
    return _conflict_ordered(ti.endpoints, ci, tj.endpoints, cj) or _conflict_ordered(tj.endpoints, cj, ti.endpoints, ci)


def _endpoint_arrays(tracklets: Sequence[Tracklet], topology: CameraTopology):
    n = len(tracklets)
    zs, ze, ts, te = (np.zeros(n, dtype=np.int64) for _ in range(4))
    cam = np.array([topology.index(t.camera_id) for t in tracklets], dtype=np.int64)
    has = np.zeros(n, dtype=bool)
    for k, t in enumerate(tracklets):
        ep = t.endpoints
        if ep is not None:
            has[k] = True
            zs[k], ze[k], ts[k], te[k] = ep.z_s, ep.z_e, ep.t_s, ep.t_e
    return zs, ze, ts, te, cam, has


def build_dbtm(tracklets: Sequence[Tracklet], topology: CameraTopology) -> np.ndarray:
    """Binary mask: 0 where a pair conflicts, 1 elsewhere (including the diagonal)."""
    zs, ze, ts, te, cam, has = _endpoint_arrays(tracklets, topology)
    # ordered (i, j): i indexes rows, j columns
    zs_i, ze_i, ts_i, te_i, c_i = zs[:, None], ze[:, None], ts[:, None], te[:, None], cam[:, None]
    ts_j, te_j, c_j = ts[None, :], te[None, :], cam[None, :]
    fires = (
        (np.isin(zs_i, (1, 2)) & (te_j < ts_i))
        | ((zs_i == 3) & (c_j > c_i) & (te_j > ts_i))
        | ((zs_i == 4) & (c_j < c_i) & (te_j > ts_i))
        | (np.isin(ze_i, (1, 2)) & (ts_j > te_i))
        | ((ze_i == 3) & (c_j > c_i) & (ts_j < te_i))
        | ((ze_i == 4) & (c_j < c_i) & (ts_j < te_i))
    )
    conflicting = fires | fires.T
    conflicting &= has[:, None] & has[None, :]
    conflicting &= c_i != c_j
    return (~conflicting).astype(np.int8)


def emit_mask_csv(mask: np.ndarray, path) -> None:
    Path(path).write_text("".join(",".join(str(int(v)) for v in row) + "\n" for row in mask))
