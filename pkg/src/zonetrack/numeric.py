"""Shared numeric kernels: box overlap, assignment, constrained clustering."""
from __future__ import annotations

from typing import Iterable, NamedTuple, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model_io import BBox


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area() + b.area() - inter)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two arrays of ``[x, y, w, h]`` rows."""
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    ax2, ay2 = a[:, 0] + a[:, 2], a[:, 1] + a[:, 3]
    bx2, by2 = b[:, 0] + b[:, 2], b[:, 1] + b[:, 3]
    iw = np.minimum(ax2[:, None], bx2[None]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(ay2[:, None], by2[None]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None] - inter
    return inter / union


def cosine(f: np.ndarray, g: np.ndarray) -> float:
    """Cosine of two unit vectors (their dot product)."""
    f, g = np.asarray(f, dtype=float), np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise ValueError(f"dimension mismatch: {f.shape} vs {g.shape}")
    return float(np.clip(f @ g, -1.0, 1.0))


def min_cost_assignment(cost: np.ndarray, max_cost: Optional[float] = None) -> list[tuple[int, int]]:
    """Minimum-cost matching; ``inf`` entries (and entries above ``max_cost``) are forbidden.

    Among matchings of maximal size over allowed pairs, returns one with the
    lowest total cost, as ``(row, col)`` pairs sorted by row.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    if cost.size == 0:
        return []
    allowed = np.isfinite(cost)
    if max_cost is not None:
        allowed &= cost <= max_cost
    if not allowed.any():
        return []
    finite = cost[allowed]
    # a forbidden pair must cost more than any complete allowed matching
    big = (np.abs(finite).sum() + 1.0) * 2.0
    work = np.where(allowed, cost, big)
    rows, cols = linear_sum_assignment(work)
    return [(int(r), int(c)) for r, c in zip(rows, cols) if allowed[r, c]]


class Merge(NamedTuple):
    """One agglomeration step: unit sets joined and the linkage distance they were joined at."""

    left: tuple[int, ...]
    right: tuple[int, ...]
    distance: float


def agglomerate(
    dist: np.ndarray,
    threshold: float,
    cannot_link: Optional[np.ndarray | Iterable[tuple[int, int]]] = None,
) -> tuple[list[list[int]], list[Merge]]:
    """Average-linkage agglomeration with cannot-link constraints.

    Repeatedly joins the two clusters with the smallest average pairwise
    distance, provided it is below ``threshold`` and no cannot-link pair
    would end up in one cluster.  Ties go to the pair with the lowest member
    indices.  Returns the clusters (each sorted, ordered by smallest member)
    and the merge history.
    """
    dist = np.array(dist, dtype=float)
    n = dist.shape[0]
    if dist.shape != (n, n):
        raise ValueError("distance matrix must be square")
    blocked = np.zeros((n, n), dtype=bool)
    if cannot_link is not None:
        if isinstance(cannot_link, np.ndarray) and cannot_link.dtype == bool:
            blocked |= cannot_link
        else:
            for i, j in cannot_link:
                blocked[i, j] = blocked[j, i] = True
    blocked |= blocked.T

    # cluster slot = smallest member index, so row-major argmin breaks ties by lowest indices
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    link = dist.copy()
    invalid = blocked | np.eye(n, dtype=bool) | np.tril(np.ones((n, n), dtype=bool))
    merges: list[Merge] = []
    while len(members) > 1:
        cand = np.where(invalid, np.inf, link)
        flat = int(np.argmin(cand))
        i, j = divmod(flat, n)
        d = cand[i, j]
        if not d < threshold:
            break
        ni, nj = len(members[i]), len(members[j])
        merges.append(Merge(tuple(members[i]), tuple(members[j]), float(d)))
        link[i, :] = (ni * link[i, :] + nj * link[j, :]) / (ni + nj)
        link[:, i] = link[i, :]
        blocked[i, :] |= blocked[j, :]
        blocked[:, i] = blocked[i, :]
        members[i] = sorted(members[i] + members.pop(j))
        # slot j is dead; slot i keeps its lower index
        invalid[j, :] = invalid[:, j] = True
        invalid[i, :] |= blocked[i, :]
        invalid[:, i] |= blocked[:, i]
        invalid[i, :i + 1] = True
        invalid[i + 1:, i] = True
    clusters = [members[k] for k in sorted(members)]
    return clusters, merges


def constrained_agglomerative(
    dist: np.ndarray,
    threshold: float,
    cannot_link: Optional[np.ndarray | Iterable[tuple[int, int]]] = None,
) -> list[list[int]]:
    """Partition from :func:`agglomerate`, without the merge history."""
    return agglomerate(dist, threshold, cannot_link)[0]
