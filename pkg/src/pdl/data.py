"""Datasets, identity-balanced batch sampling, and synthetic two-domain data.

The synthetic generator stands in for real camera-network imagery: each
identity is a Gaussian blob in input space, and the target domain is the
same kind of blob field pushed through a fixed elementwise affine "style"
map so the two domains share structure but not statistics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, SamplingError


class Domain(Enum):
    SOURCE = "source"
    TARGET = "target"


@dataclass(frozen=True)
class Sample:
    """One data point with retrieval metadata.

    ``identity`` of a TARGET sample is ground truth reserved for evaluation;
    the training path only ever sees a TrainingView, which drops it.
    """

    sample_id: int
    domain: Domain
    identity: int
    camera_id: int
    input: np.ndarray


@dataclass(frozen=True)
class TrainingView:
    """What the trainer is allowed to see: inputs, and labels only for SOURCE."""

    inputs: np.ndarray  # N x D_in
    labels: np.ndarray | None
    domain: Domain

    def __len__(self) -> int:
        return self.inputs.shape[0]


class Dataset:
    """Immutable ordered collection of samples from a single domain."""

    def __init__(self, samples: list[Sample], n_identities: int, domain: Domain):
        for i, s in enumerate(samples):
            if s.sample_id != i:
                raise ValueError(f"sample_ids must be dense 0..N-1, got {s.sample_id} at {i}")
            if s.domain is not domain:
                raise ValueError("all samples must share the dataset domain")
        self.samples = list(samples)
        self.n_identities = n_identities
        self.domain = domain

    def __len__(self) -> int:
        return len(self.samples)

    def inputs(self) -> np.ndarray:
        if not self.samples:
            return np.zeros((0, 0))
        return np.stack([s.input for s in self.samples])

    def identities(self) -> np.ndarray:
        return np.array([s.identity for s in self.samples], dtype=int)

    def camera_ids(self) -> np.ndarray:
        return np.array([s.camera_id for s in self.samples], dtype=int)

    def training_view(self) -> TrainingView:
        """Strip ground-truth labels unless this is the labeled source domain."""
        labels = self.identities() if self.domain is Domain.SOURCE else None
        return TrainingView(inputs=self.inputs(), labels=labels, domain=self.domain)

    @classmethod
    def from_arrays(cls, inputs, identities, camera_ids, domain: Domain) -> "Dataset":
        inputs = np.asarray(inputs, dtype=float)
        samples = [
            Sample(i, domain, int(identities[i]), int(camera_ids[i]), inputs[i].copy())
            for i in range(inputs.shape[0])
        ]
        return cls(samples, n_identities=len(set(int(x) for x in identities)), domain=domain)


@dataclass
class SynthConfig:
    """Two-domain blob generator settings.

    ``style_scale`` / ``style_offset`` define the elementwise affine map
    applied to every target input (scalar values broadcast over dimensions).
    ``overlap_identities`` must stay 0: the two domains share no classes.
    """

    n_identities_source: int = 10
    n_identities_target: int = 10
    samples_per_identity: int = 40
    overlap_identities: int = 0
    input_dim: int = 16
    cluster_spread: float = 0.6
    style_scale: float | np.ndarray = 1.5
    style_offset: float | np.ndarray = 0.8
    n_cameras: int = 4
    seed: int = 0

    def validate(self) -> None:
        if self.overlap_identities != 0:
            raise ConfigError("overlap_identities must be 0: domains share no classes")
        if self.cluster_spread <= 0:
            raise ConfigError(f"cluster_spread must be > 0, got {self.cluster_spread}")
        for name in ("n_identities_source", "n_identities_target", "samples_per_identity",
                     "input_dim", "n_cameras"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")


def _blob_dataset(rng, n_ids, per_id, dim, spread, n_cameras, domain, id_offset,
                  style_scale=None, style_offset=None) -> Dataset:
    means = rng.uniform(-1.0, 1.0, size=(n_ids, dim))
    samples = []
    sid = 0
    for k in range(n_ids):
        noise = rng.standard_normal((per_id, dim))
        points = means[k] + spread * noise
        if style_scale is not None:
            points = points * style_scale + style_offset
        for j in range(per_id):
            samples.append(Sample(sid, domain, id_offset + k, j % n_cameras, points[j]))
            sid += 1
    return Dataset(samples, n_identities=n_ids, domain=domain)


def generate_synthetic(config: SynthConfig) -> tuple[Dataset, Dataset]:
    """Generate (source, target) datasets; deterministic given config.seed.

    Source identities are Gaussian blobs with means in [-1, 1]^D; target
    identities are fresh blobs (disjoint identity ids, offset past the
    source range) with every input mapped through the style affine.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    source = _blob_dataset(
        rng, config.n_identities_source, config.samples_per_identity,
        config.input_dim, config.cluster_spread, config.n_cameras,
        Domain.SOURCE, id_offset=0,
    )
    target = _blob_dataset(
        rng, config.n_identities_target, config.samples_per_identity,
        config.input_dim, config.cluster_spread, config.n_cameras,
        Domain.TARGET, id_offset=config.n_identities_source,
        style_scale=np.asarray(config.style_scale, dtype=float),
        style_offset=np.asarray(config.style_offset, dtype=float),
    )
    return source, target


def pk_sample(groups: dict, p: int, k_inst: int, rng) -> list[int]:
    """Draw a P x K identity-balanced batch from label -> sample-id groups.

    Returns p * k_inst ids covering exactly p distinct labels, k_inst ids
    per label. Labels holding fewer than k_inst ids are sampled with
    replacement so the batch shape never varies.
    """
    labels = sorted(groups.keys())
    if len(labels) < p:
        raise SamplingError(f"need {p} labels, only {len(labels)} available")
    chosen = rng.choice(len(labels), size=p, replace=False)
    batch: list[int] = []
    for li in chosen:
        ids = np.asarray(groups[labels[li]])
        if len(ids) >= k_inst:
            picks = rng.choice(len(ids), size=k_inst, replace=False)
        else:
            picks = rng.choice(len(ids), size=k_inst, replace=True)
        batch.extend(int(ids[j]) for j in picks)
    return batch
