"""Small end-to-end demos trained through the relaxed sampler."""

from .bench import scaling_benchmark
from .matching import MatchResult, train_match_distribution
from .metrics import one_nn_error, trustworthiness
from .selection import SelectionResult, toy_feature_selection
from .sne import (
    EmbeddingConfig,
    SNEResult,
    neighbor_log_weights,
    neighbor_weights,
    rss_sne_loss,
    rss_sne_train,
    sample_neighbor_sequences,
    three_clusters,
)

__all__ = [
    "EmbeddingConfig",
    "MatchResult",
    "SNEResult",
    "SelectionResult",
    "neighbor_log_weights",
    "neighbor_weights",
    "one_nn_error",
    "rss_sne_loss",
    "rss_sne_train",
    "sample_neighbor_sequences",
    "scaling_benchmark",
    "three_clusters",
    "toy_feature_selection",
    "train_match_distribution",
    "trustworthiness",
]
