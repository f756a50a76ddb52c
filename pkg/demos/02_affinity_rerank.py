"""How camera-bias removal and re-ranking reshape appearance similarity.

Run with ``python3 demos/02_affinity_rerank.py``.
"""
import numpy as np

from zonetrack.affinity import camera_bias_normalize, cosine_similarity_matrix, neighbor_update, rerank

rng = np.random.default_rng(0)
d = 32

# Three vehicles, each seen by two cameras.  Each camera tints everything it sees.
identities = rng.normal(size=(3, d))
identities /= np.linalg.norm(identities, axis=1, keepdims=True)
tint = {cam: 2.4 * rng.normal(size=d) / np.sqrt(d) for cam in (41, 42)}
cams = [41, 41, 41, 42, 42, 42]
feats = np.array([identities[k % 3] + tint[c] + 0.05 * rng.normal(size=d) for k, c in enumerate(cams)])
feats /= np.linalg.norm(feats, axis=1, keepdims=True)


def same_vs_other(sim):
    cross = sim[:3, 3:]
    return np.mean(np.diag(cross)), np.mean(cross[~np.eye(3, dtype=bool)])


np.set_printoptions(precision=2, suppress=True)
raw = cosine_similarity_matrix(feats)
print("raw cosine (rows/cols: cam 41 cars a,b,c then cam 42 cars a,b,c)")
print(raw)
print("cross-camera same car %.2f vs different car %.2f\n" % same_vs_other(raw))

debiased = camera_bias_normalize(feats, cams)
s = cosine_similarity_matrix(debiased)
print("after subtracting each camera's mean feature")
print(s)
print("cross-camera same car %.2f vs different car %.2f\n" % same_vs_other(s))

smoothed = neighbor_update(debiased, 1)
rr = rerank(smoothed, k1=2, k2=1, lambda_value=0.3)
print("after a neighbour update and k-reciprocal re-ranking")
print(rr)
print("cross-camera same car %.2f vs different car %.2f" % same_vs_other(rr))
