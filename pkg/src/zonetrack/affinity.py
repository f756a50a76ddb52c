"""Tracklet appearance affinity.

The chain is: average observation features, subtract the per-camera mean,
pull each feature toward its nearest neighbours, re-rank with k-reciprocal
encoding, and finally zero out pairs forbidden by the direction mask.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .model_io import Tracklet


@dataclass
class AffinityConfig:
    bias_normalize: bool = True
    neighbor_k: int = 2
    rerank: bool = True
    k1: int = 20
    k2: int = 6
    lambda_value: float = 0.3


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def tracklet_feature(tracklet: Tracklet) -> np.ndarray:
    mean = tracklet.features().mean(axis=0)
    n = np.linalg.norm(mean)
    if n < 1e-12:
        raise ValueError(
            f"tracklet {tracklet.camera_id}/{tracklet.local_id}: observation features average to zero"
        )
    return mean / n


def tracklet_features(tracklets: Sequence[Tracklet]) -> np.ndarray:
    return np.stack([tracklet_feature(t) for t in tracklets]) if tracklets else np.zeros((0, 0))


def camera_bias_normalize(features: np.ndarray, camera_ids: Sequence[int]) -> np.ndarray:
    """Subtract each camera's mean feature from its members and re-normalize.

    Cameras with a single tracklet are left alone, as is any feature that
    vanishes after subtraction (with a warning).
    """
    features = np.asarray(features, dtype=float)
    out = features.copy()
    cams = np.asarray(camera_ids)
    for cam in np.unique(cams):
        idx = np.flatnonzero(cams == cam)
        if len(idx) < 2:
            continue
        centered = features[idx] - features[idx].mean(axis=0)
        norms = np.linalg.norm(centered, axis=1)
        for k, i in enumerate(idx):
            if norms[k] < 1e-9:
                warnings.warn(f"camera {cam}: feature {i} vanishes after bias removal, left unchanged")
            else:
                out[i] = centered[k] / norms[k]
    return out


def neighbor_update(features: np.ndarray, k: int) -> np.ndarray:
    """Replace each feature by the normalized mean of itself and its ``k`` most similar others."""
    features = np.asarray(features, dtype=float)
    m = len(features)
    k = min(k, m - 1)
    if k <= 0:
        return features.copy()
    sim = features @ features.T
    np.fill_diagonal(sim, -np.inf)
    order = np.argsort(-sim, axis=1, kind="stable")[:, :k]
    pooled = features + features[order].sum(axis=1)
    return _unit_rows(pooled)


def cosine_similarity_matrix(features: np.ndarray) -> np.ndarray:
    s = np.clip(features @ features.T, -1.0, 1.0)
    np.fill_diagonal(s, 1.0)
    return s


def _k_reciprocal(initial_rank: np.ndarray, i: int, k: int) -> np.ndarray:
    forward = initial_rank[i, : k + 1]
    backward = initial_rank[forward, : k + 1]
    return forward[np.any(backward == i, axis=1)]


def rerank(features: np.ndarray, k1: int = 20, k2: int = 6, lambda_value: float = 0.3) -> np.ndarray:
    """k-reciprocal re-ranking of all features against each other; returns a similarity matrix.

    Distances start as ``1 - cos``.  Each item's k-reciprocal set is expanded
    with the half-size reciprocal sets of its members when they overlap by
    more than two thirds, weighted by ``exp(-distance)``, smoothed over the
    ``k2`` nearest items, and compared by Jaccard distance.  The final
    distance blends the two with weight ``lambda_value`` on the original.
    """
    features = np.asarray(features, dtype=float)
    m = len(features)
    original = 1.0 - cosine_similarity_matrix(features)
    if m < 2:
        return 1.0 - original
    k1 = max(1, min(k1, m - 1))
    k2 = max(1, min(k2, k1, m - 1))
    initial_rank = np.argsort(original, axis=1, kind="stable")
    half = int(np.around(k1 / 2))

    v = np.zeros((m, m))
    for i in range(m):
        recip = _k_reciprocal(initial_rank, i, k1)
        expansion = recip
        for cand in recip:
            cand_recip = _k_reciprocal(initial_rank, cand, half)
            if len(np.intersect1d(cand_recip, recip)) > 2.0 / 3.0 * len(cand_recip):
                expansion = np.append(expansion, cand_recip)
        expansion = np.unique(expansion)
        w = np.exp(-original[i, expansion])
        v[i, expansion] = w / w.sum()
    if k2 > 1:
        v = v[initial_rank[:, :k2]].mean(axis=1)

    inter = np.empty((m, m))
    for i in range(m):
        inter[i] = np.minimum(v[i], v).sum(axis=1)
    jaccard = 1.0 - inter / (2.0 - inter)
    final = (1.0 - lambda_value) * jaccard + lambda_value * original
    return 1.0 - final


def apply_mask(similarity: np.ndarray, mask: np.ndarray) -> np.ndarray:
    similarity, mask = np.asarray(similarity), np.asarray(mask)
    if similarity.shape != mask.shape:
        raise ValueError(f"shape mismatch: similarity {similarity.shape} vs mask {mask.shape}")
    return similarity * mask


def refine_features(features: np.ndarray, camera_ids: Sequence[int], cfg: AffinityConfig) -> np.ndarray:
    if cfg.bias_normalize:
        features = camera_bias_normalize(features, camera_ids)
    if cfg.neighbor_k > 0:
        features = neighbor_update(features, cfg.neighbor_k)
    return features


def similarity_from_features(features: np.ndarray, cfg: AffinityConfig) -> np.ndarray:
    if cfg.rerank and len(features) >= 2:
        return rerank(features, cfg.k1, cfg.k2, cfg.lambda_value)
    return cosine_similarity_matrix(features)


def build_affinity(
    tracklets: Sequence[Tracklet],
    mask: Optional[np.ndarray],
    cfg: Optional[AffinityConfig] = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (refined tracklet features, similarity before masking, masked similarity)."""
    cfg = cfg or AffinityConfig()
    if not tracklets:
        empty = np.zeros((0, 0))
        return empty, empty, empty
    feats = refine_features(tracklet_features(tracklets), [t.camera_id for t in tracklets], cfg)
    sim = similarity_from_features(feats, cfg)
    masked = sim if mask is None else apply_mask(sim, mask)
    return feats, sim, masked


def emit_matrix_csv(matrix: np.ndarray, path) -> None:
    Path(path).write_text("".join(",".join(f"{v:.6f}" for v in row) + "\n" for row in matrix))
