"""Prototype dictionary learning for domain-adaptive retrieval embeddings.

A desk-scale, fully testable pipeline: a small analytic encoder with a
local-enhance perturbation and avg+max pooling, DBSCAN pseudo-labels over
k-reciprocal Jaccard distances, a momentum-refreshed prototype dictionary
driving a cluster-contrastive loss, and mAP/CMC retrieval evaluation.
"""

from .clustering import NOISE, ClusterAssignment, dbscan, k_reciprocal_jaccard, \
    pairwise_euclidean
from .data import Dataset, Domain, Sample, SynthConfig, TrainingView, \
    generate_synthetic, pk_sample
from .dictionary import Prototype, PrototypeDictionary
from .encoder import AdamState, EncoderConfig, EncoderParams, EnhanceConfig, \
    adam_step, backward, forward, init_params, load_params, local_enhance, \
    lr_schedule, param_count, pool_head, save_params
from .errors import ConfigError, DataFileError, NumericError, PdlError, SamplingError
from .evaluation import RetrievalResult, evaluate, format_metrics_line, rank_list
from .losses import LossOutput, info_nce_loss, pdl_loss
from .storage import load_embeddings, save_embeddings
from .trainer import TrainConfig, TrainState, extract_all_features, \
    format_history_line, run_epoch, train

__version__ = "0.1.0"

__all__ = [
    "AdamState", "ClusterAssignment", "ConfigError", "DataFileError", "Dataset",
    "Domain", "EncoderConfig", "EncoderParams", "EnhanceConfig", "LossOutput",
    "NOISE", "NumericError", "PdlError", "Prototype", "PrototypeDictionary",
    "RetrievalResult", "Sample", "SamplingError", "SynthConfig", "TrainConfig",
    "TrainState", "TrainingView", "adam_step", "backward", "dbscan", "evaluate",
    "extract_all_features", "format_history_line", "format_metrics_line", "forward",
    "generate_synthetic", "info_nce_loss", "init_params", "k_reciprocal_jaccard",
    "load_embeddings", "load_params", "local_enhance", "lr_schedule",
    "pairwise_euclidean", "param_count", "pdl_loss", "pk_sample", "pool_head",
    "rank_list", "run_epoch", "save_embeddings", "save_params", "train",
]
