"""Small differentiable encoder with analytic gradients.

Pipeline: affine + tanh reshaped to a C x H x W feature map, an optional
local-enhance perturbation (training only), a per-channel 1x1 mixing layer
with tanh, then a global average + maximum pooling head followed by L2
normalization. Backward is exact chain rule through every stage, including
the maxpool argmax routing and the normalization Jacobian.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError
from .storage import load_checkpoint, save_checkpoint

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

BASE_LR = 0.00035
LR_DECAY_EVERY = 20


@dataclass(frozen=True)
class EncoderConfig:
    """Shapes of the two stages; out_dim is the embedding dimension."""

    d_in: int = 16
    channels: int = 8
    height: int = 10
    width: int = 4
    out_dim: int = 32


@dataclass(frozen=True)
class EnhanceConfig:
    alpha: float = 2.0
    enabled: bool = True
    block_fraction: float = 0.1

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")


@dataclass
class EncoderParams:
    w1: np.ndarray  # (C*H*W, d_in)
    b1: np.ndarray  # (C*H*W,)
    w2: np.ndarray  # (out_dim, C)
    b2: np.ndarray  # (out_dim,)
    config: EncoderConfig

    def tensors(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def replace(self, tensors: dict[str, np.ndarray]) -> "EncoderParams":
        return EncoderParams(tensors["w1"], tensors["b1"], tensors["w2"], tensors["b2"],
                             self.config)


@dataclass
class ForwardTrace:
    """Everything backward needs to replay the forward pass exactly."""

    input: np.ndarray
    hidden: np.ndarray      # tanh(stage1), shape (C, H, W), pre-enhance
    enhanced: np.ndarray    # stage2 input, equals hidden when enhance is off
    mixed: np.ndarray       # tanh(stage2), shape (out_dim, H, W)
    max_idx: np.ndarray     # flat argmax per output channel
    prenorm: np.ndarray
    norm: float
    embedding: np.ndarray
    anchor: int | None
    alpha: float | None


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def init(cls, params: EncoderParams) -> "AdamState":
        zeros = {k: np.zeros_like(t) for k, t in params.tensors().items()}
        return cls(m=zeros, v={k: np.zeros_like(t) for k, t in params.tensors().items()})


def param_count(config: EncoderConfig) -> int:
    chw = config.channels * config.height * config.width
    return chw * config.d_in + chw + config.out_dim * config.channels + config.out_dim


def init_params(config: EncoderConfig, rng) -> EncoderParams:
    """Glorot-normal weights, zero biases."""
    chw = config.channels * config.height * config.width
    w1 = rng.standard_normal((chw, config.d_in)) * math.sqrt(2.0 / (config.d_in + chw))
    w2 = rng.standard_normal((config.out_dim, config.channels)) \
        * math.sqrt(2.0 / (config.channels + config.out_dim))
    return EncoderParams(w1, np.zeros(chw), w2, np.zeros(config.out_dim), config)


def block_height(height: int, block_fraction: float = 0.1) -> int:
    return max(1, math.floor(block_fraction * height))


def local_enhance(fmap: np.ndarray, alpha: float, p: int,
                  block_fraction: float = 0.1) -> np.ndarray:
    """Scale rows [p, p+block) of every channel by alpha; other cells untouched.

    The block spans the full width, its height is max(1, floor(0.1 * H)),
    and it carries zero learned parameters.
    """
    _, h, _ = fmap.shape
    block = block_height(h, block_fraction)
    if not 0 <= p <= h - block:
        raise ValueError(f"anchor p={p} outside [0, {h - block}]")
    out = fmap.copy()
    out[:, p:p + block, :] *= alpha
    return out


def global_avg_max(fmap: np.ndarray) -> np.ndarray:
    """Per-channel global average plus global maximum, before normalization."""
    return fmap.mean(axis=(1, 2)) + fmap.max(axis=(1, 2))


def pool_head(fmap: np.ndarray) -> np.ndarray:
    """L2-normalized avg+max pooled vector; all-zero input falls back to zeros."""
    s = global_avg_max(fmap)
    n = np.linalg.norm(s)
    if n == 0.0:
        warnings.warn("pool_head: all-zero pre-normalization vector", RuntimeWarning)
        return np.zeros_like(s)
    return s / n


def forward(params: EncoderParams, x: np.ndarray,
            enhance: EnhanceConfig | None = None, rng=None,
            anchor: int | None = None) -> tuple[np.ndarray, ForwardTrace]:
    """Encode one input to a unit-norm embedding plus a backward trace.

    When enhance is enabled, the anchor row is drawn uniformly from rng
    unless pinned explicitly (tests pin it to make runs replayable).
    """
    cfg = params.config
    z1 = params.w1 @ x + params.b1
    if not np.all(np.isfinite(z1)):
        raise NumericError("non-finite values in stage1 pre-activation")
    hidden = np.tanh(z1).reshape(cfg.channels, cfg.height, cfg.width)

    alpha_used = None
    if enhance is not None and enhance.enabled:
        block = block_height(cfg.height, enhance.block_fraction)
        if anchor is None:
            if rng is None:
                raise ValueError("enhance enabled: need rng or explicit anchor")
            anchor = int(rng.integers(0, cfg.height - block + 1))
        enhanced = local_enhance(hidden, enhance.alpha, anchor, enhance.block_fraction)
        alpha_used = enhance.alpha
    else:
        enhanced = hidden
        anchor = None

    z2 = params.w2 @ enhanced.reshape(cfg.channels, -1) + params.b2[:, None]
    if not np.all(np.isfinite(z2)):
        raise NumericError("non-finite values in stage2 pre-activation")
    mixed = np.tanh(z2).reshape(cfg.out_dim, cfg.height, cfg.width)

    flat = mixed.reshape(cfg.out_dim, -1)
    max_idx = flat.argmax(axis=1)
    prenorm = flat.mean(axis=1) + flat[np.arange(cfg.out_dim), max_idx]
    norm = float(np.linalg.norm(prenorm))
    if norm == 0.0:
        warnings.warn("forward: all-zero pooled vector", RuntimeWarning)
        embedding = np.zeros(cfg.out_dim)
    else:
        embedding = prenorm / norm
    trace = ForwardTrace(x, hidden, enhanced, mixed, max_idx, prenorm, norm,
                         embedding, anchor, alpha_used)
    return embedding, trace


def backward(params: EncoderParams, trace: ForwardTrace,
             grad_embedding: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. params, given dLoss/dEmbedding."""
    cfg = params.config
    if trace.mixed.shape != (cfg.out_dim, cfg.height, cfg.width):
        raise ValueError("trace does not match params shapes")
    g = np.asarray(grad_embedding, dtype=float)
    if g.shape != (cfg.out_dim,):
        raise ValueError(f"grad_embedding must have shape ({cfg.out_dim},)")

    n_cells = cfg.height * cfg.width
    if trace.norm == 0.0:
        ds = np.zeros(cfg.out_dim)
    else:
        v = trace.embedding
        ds = (g - v * (v @ g)) / trace.norm

    # avg pooling spreads ds uniformly; max pooling routes it to the argmax cell
    d_flat = np.repeat(ds[:, None] / n_cells, n_cells, axis=1)
    d_flat[np.arange(cfg.out_dim), trace.max_idx] += ds
    dz2 = d_flat * (1.0 - trace.mixed.reshape(cfg.out_dim, -1) ** 2)

    e_flat = trace.enhanced.reshape(cfg.channels, -1)
    dw2 = dz2 @ e_flat.T
    db2 = dz2.sum(axis=1)

    d_enh = (params.w2.T @ dz2).reshape(cfg.channels, cfg.height, cfg.width)
    if trace.alpha is not None:
        block = block_height(cfg.height)
        d_enh = d_enh.copy()
        d_enh[:, trace.anchor:trace.anchor + block, :] *= trace.alpha
    dz1 = (d_enh * (1.0 - trace.hidden ** 2)).ravel()
    dw1 = np.outer(dz1, trace.input)
    return {"w1": dw1, "b1": dz1, "w2": dw2, "b2": db2}


def adam_step(params: EncoderParams, grads: dict[str, np.ndarray], state: AdamState,
              lr: float, weight_decay: float = 0.0) -> tuple[EncoderParams, AdamState]:
    """One ADAM update; weight decay is folded into the gradient as wd * param."""
    if lr <= 0:
        raise ValueError(f"lr must be > 0, got {lr}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name!r}")
    step = state.step + 1
    new_tensors, new_m, new_v = {}, {}, {}
    bc1 = 1.0 - state.beta1 ** step
    bc2 = 1.0 - state.beta2 ** step
    for name, p in params.tensors().items():
        g = grads[name] + weight_decay * p
        m = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        new_tensors[name] = p - lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        new_m[name], new_v[name] = m, v
    new_state = AdamState(new_m, new_v, step, state.beta1, state.beta2, state.eps)
    return params.replace(new_tensors), new_state


def lr_schedule(epoch: int, base_lr: float = BASE_LR) -> float:
    """Divide the rate by 10 every 20 epochs: base * 10^-(epoch // 20)."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return base_lr * 10.0 ** (-(epoch // LR_DECAY_EVERY))


def save_params(path, params: EncoderParams) -> None:
    cfg = params.config
    meta = {"d_in": cfg.d_in, "channels": cfg.channels, "height": cfg.height,
            "width": cfg.width, "out_dim": cfg.out_dim}
    save_checkpoint(path, meta, params.tensors())


def load_params(path) -> EncoderParams:
    meta, tensors = load_checkpoint(path)
    config = EncoderConfig(**meta)
    return EncoderParams(tensors["w1"], tensors["b1"], tensors["w2"], tensors["b2"],
                         config)
