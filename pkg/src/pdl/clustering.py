"""Distance matrices and density-based pseudo-labeling.

DBSCAN runs on a precomputed distance matrix; in the training pipeline that
matrix is the k-reciprocal Jaccard distance, whose [0, 1] range is what the
0.5-0.6 eps defaults are calibrated against.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import NumericError

NOISE = -1


@dataclass
class ClusterAssignment:
    """Per-point labels, dense 0..n_clusters-1, with NOISE (-1) for outliers."""

    labels: np.ndarray
    n_clusters: int

    def noise_count(self) -> int:
        return int(np.sum(self.labels == NOISE))


def pairwise_euclidean(features: np.ndarray) -> np.ndarray:
    """All-pairs Euclidean distances; symmetric with an exactly zero diagonal."""
    features = np.asarray(features, dtype=float)
    if not np.all(np.isfinite(features)):
        raise NumericError("non-finite feature values in pairwise distance input")
    return squareform(pdist(features, metric="euclidean"))


def k_nearest(base: np.ndarray, k: int) -> list[np.ndarray]:
    """k nearest neighbors per row, self excluded, ties broken by index."""
    n = base.shape[0]
    out = []
    for i in range(n):
        order = np.argsort(base[i], kind="stable")
        order = order[order != i]
        out.append(order[:k])
    return out


def k_reciprocal_jaccard(base: np.ndarray, k: int) -> np.ndarray:
    """Jaccard distance between k-reciprocal neighbor sets.

    R(i) holds the neighbors j of i for which i is also a neighbor of j,
    plus i itself; the output is 1 - |R(i) & R(j)| / |R(i) | R(j)|,
    symmetric with a structurally zero diagonal and entries in [0, 1].
    """
    base = np.asarray(base, dtype=float)
    n = base.shape[0]
    if base.shape != (n, n):
        raise ValueError("base must be a square distance matrix")
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < {n}, got {k}")
    nbr = np.zeros((n, n), dtype=bool)
    for i, nn in enumerate(k_nearest(base, k)):
        nbr[i, nn] = True
    recip = nbr & nbr.T
    np.fill_diagonal(recip, True)
    member = recip.astype(np.int64)
    inter = member @ member.T
    sizes = member.sum(axis=1)
    union = sizes[:, None] + sizes[None, :] - inter
    return 1.0 - inter / union


def dbscan(dist: np.ndarray, eps: float, min_pts: int) -> ClusterAssignment:
    """Deterministic DBSCAN over a precomputed symmetric distance matrix.

    A point is core when its eps-neighborhood (self included) holds at
    least min_pts points. Seeds are expanded in ascending index order and a
    border point keeps the first cluster that reaches it.
    """
    dist = np.asarray(dist, dtype=float)
    n = dist.shape[0]
    if dist.shape != (n, n) or not np.array_equal(dist, dist.T):
        raise ValueError("dist must be a symmetric square matrix")
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if min_pts < 1:
        raise ValueError(f"min_pts must be >= 1, got {min_pts}")

    within = dist <= eps
    neighbors = [np.flatnonzero(within[i]) for i in range(n)]
    core = np.array([len(nb) >= min_pts for nb in neighbors])

    UNSEEN = -2
    labels = np.full(n, UNSEEN, dtype=int)
    cid = 0
    for i in range(n):
        if labels[i] != UNSEEN:
            continue
        if not core[i]:
            labels[i] = NOISE
            continue
        labels[i] = cid
        queue = deque(neighbors[i])
        while queue:
            j = queue.popleft()
            if labels[j] == NOISE:
                labels[j] = cid  # border point reclaimed from noise
            if labels[j] != UNSEEN:
                continue
            labels[j] = cid
            if core[j]:
                queue.extend(neighbors[j])
        cid += 1
    return ClusterAssignment(labels=labels, n_clusters=cid)
