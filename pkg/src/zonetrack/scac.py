"""Sub-clustering in adjacent cameras.

Phase one clusters only tracklets in connected zones of neighbouring
cameras (exit zone 3 of a camera with entry zone 4 of the next, and the
reverse direction).  Phase two clusters everything across cameras, with
each phase-one cluster represented by the mean of its members' features.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .affinity import AffinityConfig, apply_mask, similarity_from_features
from .model_io import CameraTopology, GlobalTrajectory, Tracklet
from .numeric import agglomerate


@dataclass
class LocalCluster:
    members: list[int]
    expanded_feature: np.ndarray


@dataclass
class MatchGraph:
    """Union-find over tracklet indices plus an audit trail of every merge."""

    n: int
    parent: list[int] = field(default_factory=list)
    log: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if not self.parent:
            self.parent = list(range(self.n))

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            # lower index becomes root so set order is deterministic
            lo, hi = min(ri, rj), max(ri, rj)
            self.parent[hi] = lo

    def sets(self) -> list[list[int]]:
        groups: dict[int, list[int]] = {}
        for i in range(self.n):
            groups.setdefault(self.find(i), []).append(i)
        return sorted(groups.values())

    def record(self, phase: str, left: Sequence[int], right: Sequence[int], distance: float) -> None:
        self.log.append({"phase": phase, "left": list(left), "right": list(right), "distance": distance})

    def dump(self, path, tracklets: Optional[Sequence[Tracklet]] = None) -> None:
        def name(k):
            return k if tracklets is None else [tracklets[k].camera_id, tracklets[k].local_id]

        lines = []
        for rec in self.log:
            lines.append(json.dumps({
                "phase": rec["phase"],
                "left": [name(k) for k in rec["left"]],
                "right": [name(k) for k in rec["right"]],
                "distance": rec["distance"],
            }))
        Path(path).write_text("".join(ln + "\n" for ln in lines))


def candidate_pairs(topology: CameraTopology) -> list[tuple[int, int]]:
    cams = topology.cameras
    return [(cams[k], cams[k + 1]) for k in range(len(cams) - 1)]


def _cannot_link(tracklets: Sequence[Tracklet], mask: np.ndarray, idx: Sequence[int]) -> np.ndarray:
    cams = np.array([tracklets[k].camera_id for k in idx])
    blocked = cams[:, None] == cams[None, :]
    blocked |= mask[np.ix_(idx, idx)] == 0
    np.fill_diagonal(blocked, False)
    return blocked


def _compatible(tracklets: Sequence[Tracklet], mask: np.ndarray, members: Sequence[int]) -> bool:
    cams = [tracklets[k].camera_id for k in members]
    if len(set(cams)) != len(cams):
        return False
    return bool(np.all(mask[np.ix_(members, members)] != 0))


def _expand(features: np.ndarray, members: Sequence[int]) -> np.ndarray:
    mean = features[list(members)].mean(axis=0)
    n = np.linalg.norm(mean)
    return mean / n if n > 0 else features[members[0]]


def inter_zone_cluster(
    tracklets: Sequence[Tracklet],
    s_hat: np.ndarray,
    mask: np.ndarray,
    topology: CameraTopology,
    threshold: float,
    features: np.ndarray,
    graph: Optional[MatchGraph] = None,
) -> tuple[list[LocalCluster], MatchGraph]:
    """Cluster tracklets sitting in connected zones of each adjacent camera pair."""
    graph = graph or MatchGraph(len(tracklets))
    by_cam: dict[int, list[int]] = {}
    for k, t in enumerate(tracklets):
        by_cam.setdefault(t.camera_id, []).append(k)

    def with_zone(cam, attr, label):
        return [k for k in by_cam.get(cam, []) if tracklets[k].endpoints is not None
                and getattr(tracklets[k].endpoints, attr) == label]

    for a, b in candidate_pairs(topology):
        forward = with_zone(a, "z_e", 3) + with_zone(b, "z_s", 4)
        reverse = with_zone(b, "z_e", 4) + with_zone(a, "z_s", 3)
        for cand in (forward, reverse):
            if len(cand) < 2:
                continue
            dist = 1.0 - s_hat[np.ix_(cand, cand)]
            clusters, merges = agglomerate(dist, threshold, _cannot_link(tracklets, mask, cand))
            for mg in merges:
                left, right = [cand[k] for k in mg.left], [cand[k] for k in mg.right]
                # single-writer commit: only join sets that stay consistent after reconciliation
                roots = {graph.find(k) for k in left + right}
                if len(roots) == 1:
                    continue
                joined = sorted(k for k in range(graph.n) if graph.find(k) in roots)
                if not _compatible(tracklets, mask, joined):
                    continue
                for k in left[1:] + right:
                    graph.union(left[0], k)
                graph.record("inter_zone", left, right, mg.distance)

    local = [
        LocalCluster(members, _expand(features, members))
        for members in graph.sets()
        if len(members) >= 2
    ]
    return local, graph


def inter_cam_cluster(
    tracklets: Sequence[Tracklet],
    local_clusters: Sequence[LocalCluster],
    features: np.ndarray,
    mask: np.ndarray,
    threshold: float,
    affinity_cfg: Optional[AffinityConfig] = None,
    graph: Optional[MatchGraph] = None,
) -> list[list[int]]:
    """Cluster local clusters and leftover tracklets across all cameras."""
    affinity_cfg = affinity_cfg or AffinityConfig()
    n = len(tracklets)
    graph = graph or MatchGraph(n)
    clustered = {k for lc in local_clusters for k in lc.members}
    units = [list(lc.members) for lc in local_clusters] + [[k] for k in range(n) if k not in clustered]
    units.sort()
    if not units:
        return []
    unit_feats = np.stack([
        next((lc.expanded_feature for lc in local_clusters if lc.members == u), None)
        if len(u) > 1 else features[u[0]]
        for u in units
    ])
    u = len(units)
    unit_mask = np.ones((u, u), dtype=np.int8)
    blocked = np.zeros((u, u), dtype=bool)
    cams = [{tracklets[k].camera_id for k in unit} for unit in units]
    for p in range(u):
        for q in range(p + 1, u):
            if np.any(mask[np.ix_(units[p], units[q])] == 0):
                unit_mask[p, q] = unit_mask[q, p] = 0
                blocked[p, q] = blocked[q, p] = True
            if cams[p] & cams[q]:
                blocked[p, q] = blocked[q, p] = True
    sim = apply_mask(similarity_from_features(unit_feats, affinity_cfg), unit_mask)
    groups, merges = agglomerate(1.0 - sim, threshold, blocked)
    for mg in merges:
        left = sorted(k for p in mg.left for k in units[p])
        right = sorted(k for p in mg.right for k in units[p])
        for k in left[1:] + right:
            graph.union(left[0], k)
        graph.record("inter_cam", left, right, mg.distance)
    return sorted(sorted(k for p in g for k in units[p]) for g in groups)


def global_cluster(
    tracklets: Sequence[Tracklet],
    s_hat: np.ndarray,
    mask: np.ndarray,
    threshold: float,
    graph: Optional[MatchGraph] = None,
) -> list[list[int]]:
    """Single agglomeration over all tracklets (the variant without sub-clustering)."""
    n = len(tracklets)
    if n == 0:
        return []
    graph = graph or MatchGraph(n)
    idx = list(range(n))
    clusters, merges = agglomerate(1.0 - s_hat, threshold, _cannot_link(tracklets, mask, idx))
    for mg in merges:
        for k in mg.left[1:] + mg.right:
            graph.union(mg.left[0], k)
        graph.record("global", mg.left, mg.right, mg.distance)
    return clusters


def assign_global_ids(
    partition: Sequence[Sequence[int]],
    tracklets: Sequence[Tracklet],
    include_single_camera: bool = False,
) -> list[GlobalTrajectory]:
    """Number clusters 1.. in order of earliest start frame; single-camera clusters only on request."""
    keep = []
    for cluster in partition:
        cams = {tracklets[k].camera_id for k in cluster}
        if len(cams) >= 2 or include_single_camera:
            keep.append(sorted(cluster))
    keep.sort(key=lambda c: (min(tracklets[k].t_start for k in c), c[0]))
    out = []
    for gid, cluster in enumerate(keep, 1):
        members = sorted(((tracklets[k].camera_id, tracklets[k]) for k in cluster), key=lambda m: (m[0], m[1].local_id))
        out.append(GlobalTrajectory(gid, members))
    return out
