"""Fixed-capacity store of category prototypes with momentum refresh.

One prototype per source class and per target cluster, rebuilt from
centroids at the start of every epoch and blended toward incoming query
features after every iteration. Prototypes live on the unit sphere so dot
products realize cosine similarity; they are never touched by backprop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import NOISE
from .data import Domain
from .errors import NumericError

DEFAULT_MOMENTUM = 0.1


@dataclass
class Prototype:
    vector: np.ndarray
    category_id: int
    domain: Domain
    member_count: int


class PrototypeDictionary:
    """Ordered prototypes, source block first, then target clusters."""

    def __init__(self, prototypes: list[Prototype], momentum: float = DEFAULT_MOMENTUM):
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {momentum}")
        if not prototypes:
            raise ValueError("dictionary requires at least one category")
        order = [p.domain for p in prototypes]
        if order != sorted(order, key=lambda d: d is Domain.TARGET):
            raise ValueError("prototypes must be ordered source block then target block")
        self.momentum = momentum
        self._prototypes = prototypes
        self._rows = {}
        for row, proto in enumerate(prototypes):
            key = (proto.domain, proto.category_id)
            if key in self._rows:
                raise ValueError(f"duplicate category {key}")
            self._rows[key] = row
        self._matrix = np.stack([p.vector for p in prototypes])

    @classmethod
    def from_features(cls, features: np.ndarray, source_labels, target_pseudo_labels,
                      momentum: float = DEFAULT_MOMENTUM) -> "PrototypeDictionary":
        """Build prototypes as L2-normalized per-category centroids.

        ``features`` stacks source rows first, then target rows; noise
        pseudo-labels contribute to no prototype.
        """
        features = np.asarray(features, dtype=float)
        source_labels = np.asarray(source_labels, dtype=int)
        target_pseudo_labels = np.asarray(target_pseudo_labels, dtype=int)
        n_s = len(source_labels)
        if n_s + len(target_pseudo_labels) != features.shape[0]:
            raise ValueError("label counts do not cover the feature rows")
        src_feat, tgt_feat = features[:n_s], features[n_s:]
        protos = []
        for cat in sorted(set(source_labels.tolist())):
            protos.append(_centroid_prototype(src_feat, source_labels == cat,
                                              cat, Domain.SOURCE))
        for cat in sorted(set(target_pseudo_labels.tolist()) - {NOISE}):
            protos.append(_centroid_prototype(tgt_feat, target_pseudo_labels == cat,
                                              cat, Domain.TARGET))
        if not protos:
            raise ValueError("no categories: need source labels or non-noise clusters")
        return cls(protos, momentum=momentum)

    @property
    def n_source(self) -> int:
        return sum(1 for p in self._prototypes if p.domain is Domain.SOURCE)

    @property
    def n_target(self) -> int:
        return len(self._prototypes) - self.n_source

    @property
    def capacity(self) -> int:
        return len(self._prototypes)

    def row_index(self, domain: Domain, category_id: int) -> int:
        key = (domain, int(category_id))
        if key not in self._rows:
            raise ValueError(f"unknown category {key}; pseudo-labels may be stale")
        return self._rows[key]

    def prototype(self, domain: Domain, category_id: int) -> Prototype:
        return self._prototypes[self.row_index(domain, category_id)]

    def all_prototypes(self) -> np.ndarray:
        """Matrix of all prototype vectors in stable row order."""
        return self._matrix.copy()

    def update(self, domain: Domain, category_id: int, query: np.ndarray,
               momentum: float | None = None) -> None:
        """Blend the category prototype toward a unit-norm query feature."""
        m = self.momentum if momentum is None else momentum
        if not 0.0 <= m < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {m}")
        row = self.row_index(domain, category_id)
        blended = m * self._matrix[row] + (1.0 - m) * np.asarray(query, dtype=float)
        norm = np.linalg.norm(blended)
        if norm == 0.0:
            raise NumericError("momentum update produced a zero prototype")
        vec = blended / norm
        self._matrix[row] = vec
        self._prototypes[row].vector = vec


def _centroid_prototype(features, mask, category_id, domain) -> Prototype:
    count = int(np.sum(mask))
    centroid = features[mask].mean(axis=0)
    norm = np.linalg.norm(centroid)
    if norm == 0.0:
        raise NumericError(f"zero centroid for category {category_id} ({domain.value})")
    return Prototype(centroid / norm, int(category_id), domain, count)
