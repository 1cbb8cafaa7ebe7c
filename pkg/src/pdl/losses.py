"""Contrastive losses with analytic query gradients.

Similarity is the dot product of unit vectors throughout. Prototypes,
positives, and negatives are treated as constants: only the query side
receives gradients, matching the dictionary's momentum-update contract.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError

DEFAULT_TAU = 0.05


@dataclass
class LossOutput:
    loss: float
    grad_wrt_queries: np.ndarray   # B x D
    per_query_softmax: np.ndarray  # B x n_candidates


def stable_softmax(logits: np.ndarray) -> np.ndarray:
    """Row softmax with max subtraction; invariant to per-row constant shifts."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _check_inputs(tau, *arrays) -> None:
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericError("non-finite loss input")


def pdl_loss(queries: np.ndarray, positive_rows, prototypes: np.ndarray,
             tau: float = DEFAULT_TAU) -> LossOutput:
    """Cluster-contrastive loss of queries against the full prototype matrix.

    loss = -(1/B) sum_i log softmax_i[positive_i], where the logits are
    query-prototype cosines divided by tau. Gradients flow to queries only:
    grad_i = (1/(B tau)) * (softmax_i - onehot_i) @ prototypes.
    """
    queries = np.asarray(queries, dtype=float)
    prototypes = np.asarray(prototypes, dtype=float)
    positive_rows = np.asarray(positive_rows, dtype=int)
    _check_inputs(tau, queries, prototypes)
    b, m = queries.shape[0], prototypes.shape[0]
    if positive_rows.shape != (b,):
        raise ValueError("positive_rows must have one entry per query")
    if np.any(positive_rows < 0) or np.any(positive_rows >= m):
        raise ValueError("positive row index out of range")

    logits = queries @ prototypes.T / tau
    softmax = stable_softmax(logits)
    log_probs = _log_softmax_rows(logits)
    loss = -float(np.mean(log_probs[np.arange(b), positive_rows]))

    coeff = softmax.copy()
    coeff[np.arange(b), positive_rows] -= 1.0
    grad = coeff @ prototypes / (b * tau)
    return LossOutput(loss=loss, grad_wrt_queries=grad, per_query_softmax=softmax)


def info_nce_loss(queries: np.ndarray, positives: np.ndarray, negatives: np.ndarray,
                  tau: float = DEFAULT_TAU) -> LossOutput:
    """Instance-level contrastive loss: one positive, K negatives per query.

    Softmax column 0 is the positive. Used as the ablation baseline that
    compares instances directly instead of category prototypes.
    """
    queries = np.asarray(queries, dtype=float)
    positives = np.asarray(positives, dtype=float)
    negatives = np.asarray(negatives, dtype=float)
    _check_inputs(tau, queries, positives, negatives)
    b = queries.shape[0]
    if positives.shape != queries.shape or negatives.shape[0] != b:
        raise ValueError("positives/negatives do not match the query batch")

    pos_sim = np.sum(queries * positives, axis=1, keepdims=True)
    neg_sim = np.einsum("bd,bkd->bk", queries, negatives)
    logits = np.concatenate([pos_sim, neg_sim], axis=1) / tau
    softmax = stable_softmax(logits)
    log_probs = _log_softmax_rows(logits)
    loss = -float(np.mean(log_probs[:, 0]))

    coeff = softmax.copy()
    coeff[:, 0] -= 1.0
    candidates = np.concatenate([positives[:, None, :], negatives], axis=1)
    grad = np.einsum("bk,bkd->bd", coeff, candidates) / (b * tau)
    return LossOutput(loss=loss, grad_wrt_queries=grad, per_query_softmax=softmax)
