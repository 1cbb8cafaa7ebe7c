"""Joint source+target training loop with per-epoch pseudo-labeling.

Each epoch: extract features for both domains, cluster the target by
DBSCAN over k-reciprocal Jaccard distances, rebuild the prototype
dictionary from scratch, then run identity-balanced mixed batches that
update the encoder by backprop and the dictionary by momentum. The trainer
only ever sees TrainingView objects, so target ground-truth identities are
structurally out of reach.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .clustering import NOISE, ClusterAssignment, dbscan, k_reciprocal_jaccard, \
    pairwise_euclidean
from .data import Domain, TrainingView, pk_sample
from .dictionary import PrototypeDictionary
from .encoder import AdamState, EncoderConfig, EncoderParams, EnhanceConfig, \
    adam_step, backward, forward, init_params, lr_schedule, save_params
from .errors import ConfigError, SamplingError
from .losses import info_nce_loss, pdl_loss

log = logging.getLogger(__name__)

LOSS_KINDS = ("pdl", "infonce")


@dataclass
class TrainConfig:
    epochs: int = 50
    iterations_per_epoch: int | None = None  # None: one sweep over usable samples
    batch_p: int = 4
    batch_k: int = 16
    base_lr: float = 0.00035
    weight_decay: float = 0.0005
    momentum: float = 0.1
    tau: float = 0.05
    eps: float = 0.6
    min_pts: int = 4
    k_reciprocal: int = 30
    alpha: float = 2.0
    enhance: bool = True
    loss_kind: str = "pdl"
    seed: int = 0
    threads: int = 1
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    def validate(self) -> None:
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        for name in ("batch_p", "batch_k", "min_pts", "k_reciprocal", "threads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("base_lr", "weight_decay", "tau", "eps", "alpha"):
            if getattr(self, name) <= 0 and name != "weight_decay":
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"loss must be one of {LOSS_KINDS}, got {self.loss_kind!r}")

    def enhance_config(self) -> EnhanceConfig | None:
        if not self.enhance:
            return None
        return EnhanceConfig(alpha=self.alpha, enabled=True)


@dataclass
class HistoryEntry:
    epoch: int
    loss: float
    clusters: int
    noise: int
    lr: float


@dataclass
class TrainState:
    params: EncoderParams
    adam: AdamState
    dictionary: PrototypeDictionary | None
    epoch: int
    iteration: int
    rng: np.random.Generator
    history: list[HistoryEntry]


def format_history_line(entry: HistoryEntry) -> str:
    return (f"epoch={entry.epoch} loss={entry.loss:.6f} clusters={entry.clusters} "
            f"noise={entry.noise} lr={entry.lr!r}")


def extract_all_features(params: EncoderParams, inputs: np.ndarray,
                         threads: int = 1) -> np.ndarray:
    """Embed every row with enhancement disabled; deterministic given params."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.shape[0] == 0:
        return np.zeros((0, params.config.out_dim))

    def embed(row):
        return forward(params, row)[0]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(embed, inputs))
    else:
        rows = [embed(row) for row in inputs]
    return np.stack(rows)


def _label_budget(p: int, n_source_labels: int, n_target_labels: int) -> tuple[int, int]:
    """Split the P label slots half/half, falling back to whichever side has labels."""
    p_t = min(p // 2, n_target_labels)
    p_s = min(p - p_t, n_source_labels)
    p_t = min(p - p_s, n_target_labels)
    if p_s + p_t == 0:
        raise SamplingError("no labels available in either domain")
    return p_s, p_t


def _pseudo_label_target(features: np.ndarray, config: TrainConfig) -> ClusterAssignment:
    n = features.shape[0]
    if n < 2:
        return ClusterAssignment(labels=np.full(n, NOISE, dtype=int), n_clusters=0)
    k = min(config.k_reciprocal, n - 1)
    jaccard = k_reciprocal_jaccard(pairwise_euclidean(features), k)
    return dbscan(jaccard, config.eps, config.min_pts)


def run_epoch(state: TrainState, source: TrainingView, target: TrainingView,
              config: TrainConfig) -> TrainState:
    """One outer-loop pass: re-cluster, rebuild the dictionary, train I_max batches."""
    feats_s = extract_all_features(state.params, source.inputs, config.threads)
    feats_t = extract_all_features(state.params, target.inputs, config.threads)

    assignment = _pseudo_label_target(feats_t, config)
    pseudo = assignment.labels
    if len(target) > 0 and assignment.n_clusters == 0:
        log.warning("epoch %d: all target samples are noise; source-only epoch",
                    state.epoch)

    src_labels = source.labels if source.labels is not None \
        else np.zeros(0, dtype=int)
    if config.loss_kind == "pdl":
        state.dictionary = PrototypeDictionary.from_features(
            np.vstack([feats_s, feats_t]), src_labels, pseudo,
            momentum=config.momentum)
    else:
        state.dictionary = None

    source_groups = {int(lbl): np.flatnonzero(src_labels == lbl)
                     for lbl in sorted(set(src_labels.tolist()))}
    target_groups = {int(c): np.flatnonzero(pseudo == c)
                     for c in range(assignment.n_clusters)}
    usable = len(source) + int(np.sum(pseudo != NOISE))
    batch_size = config.batch_p * config.batch_k
    i_max = config.iterations_per_epoch or max(1, math.ceil(usable / batch_size))

    lr = lr_schedule(state.epoch, config.base_lr)
    enhance = config.enhance_config()
    losses = []
    for _ in range(i_max):
        p_s, p_t = _label_budget(config.batch_p, len(source_groups), len(target_groups))
        if p_s + p_t < config.batch_p:
            log.warning("epoch %d: only %d labels available for a P=%d batch",
                        state.epoch, p_s + p_t, config.batch_p)
        batch = []
        if p_s:
            ids = pk_sample(source_groups, p_s, config.batch_k, state.rng)
            batch.extend((Domain.SOURCE, int(src_labels[i]), i) for i in sorted(ids))
        if p_t:
            ids = pk_sample(target_groups, p_t, config.batch_k, state.rng)
            batch.extend((Domain.TARGET, int(pseudo[i]), i) for i in sorted(ids))

        embeddings, traces = [], []
        for domain, _, idx in batch:
            view = source if domain is Domain.SOURCE else target
            vec, trace = forward(state.params, view.inputs[idx], enhance, state.rng)
            embeddings.append(vec)
            traces.append(trace)
        queries = np.stack(embeddings)

        if config.loss_kind == "pdl":
            prototypes = state.dictionary.all_prototypes()
            pos = np.array([state.dictionary.row_index(dom, lbl)
                            for dom, lbl, _ in batch])
            out = pdl_loss(queries, pos, prototypes, config.tau)
        else:
            out = _instance_loss(state, batch, queries, source, target, enhance, config)

        grads = None
        for i, trace in enumerate(traces):
            g = backward(state.params, trace, out.grad_wrt_queries[i])
            if grads is None:
                grads = g
            else:
                for name in grads:
                    grads[name] += g[name]

        if state.dictionary is not None:
            for (domain, label, _), vec in zip(batch, queries):
                state.dictionary.update(domain, label, vec)

        state.params, state.adam = adam_step(state.params, grads, state.adam,
                                             lr, config.weight_decay)
        losses.append(out.loss)
        state.iteration += 1

    state.history.append(HistoryEntry(
        epoch=state.epoch, loss=float(np.mean(losses)) if losses else 0.0,
        clusters=assignment.n_clusters, noise=assignment.noise_count(), lr=lr))
    state.epoch += 1
    return state


def _instance_loss(state, batch, queries, source, target, enhance, config):
    """Instance-level ablation: positive is a second enhanced view of the same
    sample, negatives are every other batch embedding regardless of label."""
    b = queries.shape[0]
    positives = []
    for domain, _, idx in batch:
        view = source if domain is Domain.SOURCE else target
        vec, _ = forward(state.params, view.inputs[idx], enhance, state.rng)
        positives.append(vec)
    positives = np.stack(positives)
    negatives = np.stack([np.delete(queries, i, axis=0) for i in range(b)])
    return info_nce_loss(queries, positives, negatives, config.tau)


def init_state(config: TrainConfig) -> TrainState:
    rng = np.random.default_rng(config.seed)
    params = init_params(config.encoder, rng)
    return TrainState(params=params, adam=AdamState.init(params), dictionary=None,
                      epoch=0, iteration=0, rng=rng, history=[])


def train(config: TrainConfig, source, target,
          checkpoint_path: str | None = None,
          checkpoint_every: int = 0) -> tuple[EncoderParams, list[HistoryEntry]]:
    """Run the full schedule; optionally checkpoint every N epochs plus at the end.

    ``source`` and ``target`` are Datasets; their identity metadata is
    stripped here, at the boundary, before anything else runs.
    """
    config.validate()
    source_view = source.training_view()
    target_view = target.training_view()
    state = init_state(config)

    for epoch in range(config.epochs):
        run_epoch(state, source_view, target_view, config)
        if checkpoint_path and checkpoint_every > 0 and (epoch + 1) % checkpoint_every == 0:
            save_params(f"{checkpoint_path}.ep{epoch + 1}", state.params)
    if checkpoint_path:
        save_params(checkpoint_path, state.params)
    return state.params, state.history
