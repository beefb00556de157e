"""Feature weighting for cold-start items learned from collaborative item similarities."""

from .cfsim import (
    GraphConfig,
    KnnConfig,
    SlimConfig,
    build_similarity,
    knn_similarity,
    p3alpha,
    rp3beta,
    slim_bpr,
    slim_mse,
)
from .cfw import CfwTrainConfig, train_cfw, train_fbsm, weighted_content_similarity
from .core import FeatureMatrix, FeatureWeights, InteractionMatrix, SimilarityMatrix, prune_topk
from .evaluation import MetricReport, compare_report, evaluate_cold, ranking_metrics
from .ingest import RawDatasetConfig, SplitBundle, filter_features, k_core, load_dataset, split_cold_items
from .irweight import Bm25Params, bm25, content_knn, tf_idf

__version__ = "0.1.0"

__all__ = [
    "Bm25Params", "CfwTrainConfig", "FeatureMatrix", "FeatureWeights", "GraphConfig", "InteractionMatrix",
    "KnnConfig", "MetricReport", "RawDatasetConfig", "SimilarityMatrix", "SlimConfig", "SplitBundle",
    "bm25", "build_similarity", "compare_report", "content_knn", "evaluate_cold", "filter_features", "k_core", "knn_similarity", "load_dataset",
    "p3alpha", "prune_topk", "ranking_metrics", "rp3beta", "slim_bpr", "slim_mse", "split_cold_items",
    "tf_idf", "train_cfw", "train_fbsm", "weighted_content_similarity",
]
