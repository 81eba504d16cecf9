"""Metric-guided subgraph sampling and mini-batch GCN training."""

from .exceptions import MeguideError
from .graph import (
    SENTINEL_UNLABELED,
    DatasetBundle,
    Graph,
    Subgraph,
    induced_subgraph,
    load_dataset,
    load_graph,
    neighbors,
    save_dataset,
)
from .metrics import (
    UNREACHABLE,
    EdgeSmoothnessCache,
    MetricsReport,
    compute_metrics_report,
    connection_failure_distance,
    feature_smoothness_graph,
    feature_smoothness_pair,
    hop_distance,
)
from .samplers import SamplerConfig, bfs_sample, meguide_sample, random_sample
from .gcn import GcnModel, forward, loss_and_grads, node_representations
from .training import RunReport, TrainConfig, build_batch_set, rho_sweep, train
from .prediction import (
    aggregate_representations,
    build_test_set,
    predict,
    train_predictor,
)

__version__ = "0.1.0"

__all__ = [
    "SENTINEL_UNLABELED",
    "UNREACHABLE",
    "DatasetBundle",
    "EdgeSmoothnessCache",
    "GcnModel",
    "Graph",
    "MeguideError",
    "MetricsReport",
    "RunReport",
    "SamplerConfig",
    "Subgraph",
    "TrainConfig",
    "aggregate_representations",
    "bfs_sample",
    "build_batch_set",
    "build_test_set",
    "compute_metrics_report",
    "connection_failure_distance",
    "feature_smoothness_graph",
    "feature_smoothness_pair",
    "forward",
    "hop_distance",
    "induced_subgraph",
    "load_dataset",
    "load_graph",
    "loss_and_grads",
    "meguide_sample",
    "neighbors",
    "node_representations",
    "predict",
    "random_sample",
    "rho_sweep",
    "save_dataset",
    "train",
    "train_predictor",
]
