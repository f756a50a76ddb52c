"""Brute-force reference implementations used only by the tests.

Each one is written from the definition, deliberately without sharing code
or vectorization tricks with the package.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def exhaustive_assignment_cost(cost: np.ndarray) -> float:
    """Minimum total cost over all matchings of size min(n_rows, n_cols).

    Sums use ``math.fsum`` so the result does not depend on summation order.
    """
    n, m = cost.shape
    best = math.inf
    if n <= m:
        for cols in itertools.permutations(range(m), n):
            best = min(best, math.fsum(cost[r, c] for r, c in enumerate(cols)))
    else:
        for rows in itertools.permutations(range(n), m):
            best = min(best, math.fsum(cost[r, c] for c, r in enumerate(rows)))
    return best


def conflict_table_oracle(ei, ci, ej, cj) -> bool:
    """Conflict table read row by row, ordered pair (i, j) then (j, i).

    ``ei``/``ej`` are (z_s, z_e, t_s, t_e); ``ci``/``cj`` camera positions.
    """

    def rows(a, ca, b, cb):
        zs_a, ze_a, ts_a, te_a = a
        zs_b, ze_b, ts_b, te_b = b
        table = [
            (zs_a == 1 or zs_a == 2, True, te_b < ts_a),
            (zs_a == 3, cb > ca, te_b > ts_a),
            (zs_a == 4, cb < ca, te_b > ts_a),
            (ze_a == 1 or ze_a == 2, True, ts_b > te_a),
            (ze_a == 3, cb > ca, ts_b < te_a),
            (ze_a == 4, cb < ca, ts_b < te_a),
        ]
        return any(zone and cam and time for zone, cam, time in table)

    if ci == cj:
        return False
    return rows(ei, ci, ej, cj) or rows(ej, cj, ei, ci)


def k_reciprocal_rerank(features: np.ndarray, k1: int, k2: int, lam: float) -> np.ndarray:
    """Set-based transcription of k-reciprocal re-ranking; returns a similarity matrix."""
    m = len(features)
    dist = [[1.0 - min(1.0, max(-1.0, float(features[i] @ features[j]))) if i != j else 0.0
             for j in range(m)] for i in range(m)]
    k1 = max(1, min(k1, m - 1))
    k2 = max(1, min(k2, k1, m - 1))
    # neighbour ranking: ascending distance, ties by index
    rank = [sorted(range(m), key=lambda j, i=i: (dist[i][j], j)) for i in range(m)]

    def knn(i, k):
        return set(rank[i][: k + 1])

    def recip(i, k):
        return {j for j in knn(i, k) if i in knn(j, k)}

    half = int(np.around(k1 / 2))
    weights = []
    for i in range(m):
        r = recip(i, k1)
        exp_set = set(r)
        for c in r:
            rc = recip(c, half)
            if len(rc & r) > 2.0 / 3.0 * len(rc):
                exp_set |= rc
        total = sum(math.exp(-dist[i][j]) for j in exp_set)
        weights.append({j: math.exp(-dist[i][j]) / total for j in exp_set})

    vec = [[weights[i].get(j, 0.0) for j in range(m)] for i in range(m)]
    if k2 > 1:
        vec = [[sum(vec[q][j] for q in rank[i][:k2]) / k2 for j in range(m)] for i in range(m)]

    sim = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            num = sum(min(vec[i][t], vec[j][t]) for t in range(m))
            den = sum(max(vec[i][t], vec[j][t]) for t in range(m))
            jac = 1.0 - num / den
            sim[i, j] = 1.0 - ((1.0 - lam) * jac + lam * dist[i][j])
    return sim


def exhaustive_idtp(counts: np.ndarray) -> int:
    """Best total overlap over every partial one-to-one pairing of gt ids with pred ids."""
    n_g, n_p = counts.shape
    best = 0
    for k in range(0, min(n_g, n_p) + 1):
        for gs in itertools.combinations(range(n_g), k):
            for ps in itertools.permutations(range(n_p), k):
                best = max(best, sum(int(counts[g, p]) for g, p in zip(gs, ps)))
    return best


def greedy_nms(boxes, confs, iou_fn, thresh):
    """Keep the most confident box, drop everything overlapping it, repeat."""
    remaining = sorted(range(len(boxes)), key=lambda i: (-confs[i], i))
    keep = []
    while remaining:
        top = remaining.pop(0)
        keep.append(top)
        remaining = [i for i in remaining if iou_fn(boxes[top], boxes[i]) <= thresh]
    return sorted(keep)


def pixel_iou(a, b) -> float:
    """IoU by counting unit pixels covered by integer boxes (x, y, w, h)."""
    pa = {(x, y) for x in range(a[0], a[0] + a[2]) for y in range(a[1], a[1] + a[3])}
    pb = {(x, y) for x in range(b[0], b[0] + b[2]) for y in range(b[1], b[1] + b[3])}
    return len(pa & pb) / len(pa | pb)
