"""Python bindings for the lslab core operations."""

from ._core import (
    ConfigError,
    LslabError,
    __version__,
    bleu,
    bucket_of,
    cross_entropy,
    enumerate_sites,
    importance_score,
    l1_prune_mask,
    method_label,
    parse_rank_policy,
    pearson_correlation,
    schedule_ratio,
    softmax,
    trainable_param_count,
)

__all__ = [
    "ConfigError",
    "LslabError",
    "__version__",
    "bleu",
    "bucket_of",
    "cross_entropy",
    "enumerate_sites",
    "importance_score",
    "l1_prune_mask",
    "method_label",
    "parse_rank_policy",
    "pearson_correlation",
    "schedule_ratio",
    "softmax",
    "trainable_param_count",
]
