"""Retrieval metrics: mean average precision and CMC rank accuracy.

Standard cross-camera protocol: for each query, gallery entries sharing
both its identity and its camera are junk and never scored, so evaluating
a set against itself is well defined (the self match is junk).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

DEFAULT_RANKS = (1, 5, 10)


@dataclass
class RetrievalResult:
    mean_ap: float
    cmc: dict[int, float]
    n_valid_queries: int
    n_excluded: int


def rank_list(query_emb: np.ndarray, gallery_emb: np.ndarray) -> np.ndarray:
    """Per-query gallery indices by ascending distance, ties broken by index."""
    dist = cdist(np.atleast_2d(query_emb), np.atleast_2d(gallery_emb))
    return np.argsort(dist, axis=1, kind="stable")


def evaluate(query_emb, gallery_emb, query_ids, query_cams, gallery_ids, gallery_cams,
             ranks=DEFAULT_RANKS) -> RetrievalResult:
    """Score a query set against a gallery.

    Per query: sort the gallery by distance, drop same-identity same-camera
    entries, then AP is the mean of precision at each relevant position and
    CMC[r] asks whether the first relevant entry sits within the top r.
    Queries with zero valid relevant entries are excluded from both metrics
    and tallied in n_excluded.
    """
    query_ids = np.asarray(query_ids, dtype=int)
    query_cams = np.asarray(query_cams, dtype=int)
    gallery_ids = np.asarray(gallery_ids, dtype=int)
    gallery_cams = np.asarray(gallery_cams, dtype=int)
    order = rank_list(query_emb, gallery_emb)

    aps = []
    first_hits = []
    n_excluded = 0
    for qi in range(order.shape[0]):
        ordered = order[qi]
        junk = (gallery_ids[ordered] == query_ids[qi]) & \
               (gallery_cams[ordered] == query_cams[qi])
        kept = ordered[~junk]
        match = gallery_ids[kept] == query_ids[qi]
        if not match.any():
            n_excluded += 1
            continue
        hit_ranks = np.flatnonzero(match) + 1
        precision = np.arange(1, len(hit_ranks) + 1) / hit_ranks
        aps.append(precision.mean())
        first_hits.append(hit_ranks[0])

    n_valid = len(aps)
    if n_valid == 0:
        cmc = {int(r): 0.0 for r in ranks}
        return RetrievalResult(0.0, cmc, 0, n_excluded)
    first_hits = np.array(first_hits)
    cmc = {int(r): float(np.mean(first_hits <= r)) for r in ranks}
    return RetrievalResult(float(np.mean(aps)), cmc, n_valid, n_excluded)


def format_metrics_line(result: RetrievalResult) -> str:
    r = result
    return (f"mAP={r.mean_ap:.6f} rank1={r.cmc.get(1, 0.0):.6f} "
            f"rank5={r.cmc.get(5, 0.0):.6f} rank10={r.cmc.get(10, 0.0):.6f} "
            f"excluded={r.n_excluded}")
