"""Representation aggregation-based prediction.

After training, every node must appear in at least one subgraph: nodes
missed by the training batch set become roots of extra samples. A
node's representations from all subgraphs containing it are mean-pooled,
a fresh softmax head is trained on the pooled rows of train-masked
nodes, and the head classifies everything else. The full graph is never
fed through the GCN on this path.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import ConfigurationError, CoverageError
from .gcn import (
    GcnModel,
    adam_step,
    init_adam,
    log_softmax,
    masked_accuracy,
    node_representations,
    normalize_adjacency,
)
from .graph import Graph, induced_subgraph
from .metrics import EdgeSmoothnessCache
from .samplers import SamplerConfig, bfs_sample, meguide_sample


@dataclass
class TestSubgraphSet:
    subgraphs: list  # batch subgraphs first, extras appended
    coverage: dict  # global node id -> [(subgraph index, local id), ...]
    extras_count: int


@dataclass
class AggregatedRepresentations:
    H_agg: np.ndarray  # num_covered_nodes x hidden_dim
    nodes: np.ndarray  # sorted global ids, row i <-> nodes[i]
    node_index: dict  # global id -> row


@dataclass
class PredictorHead:
    W: np.ndarray  # hidden_dim x num_classes
    b: np.ndarray | None = None


def coverage_of(subgraphs) -> dict:
    cov: dict[int, list] = {}
    for k, sub in enumerate(subgraphs):
        for local, node in enumerate(sub.nodes.tolist()):
            cov.setdefault(node, []).append((k, local))
    return cov


def build_test_set(
    g: Graph,
    batch: list,
    sampler_cfg: SamplerConfig,
    lambda_d: float,
    lambda_f: float,
    rng: np.random.Generator,
    cache: EdgeSmoothnessCache | None = None,
    target_nodes=None,
) -> TestSubgraphSet:
    """Extend the batch with extra subgraphs until every target node is
    covered.

    Missing nodes are processed in ascending order as pinned roots; each
    extra contains at least its root, so at most one extra per missing
    node is needed.
    """
    if not batch:
        raise ConfigurationError("build_test_set needs a nonempty batch")
    if target_nodes is None:
        target_nodes = range(g.num_nodes)
    covered = set(coverage_of(batch).keys())
    extra_cfg = replace(sampler_cfg, min_size=1)
    if cache is None and extra_cfg.kind == "meguide":
        cache = EdgeSmoothnessCache(g)
    extras = []
    for node in sorted(target_nodes):
        if node in covered:
            continue
        if extra_cfg.kind == "meguide":
            sub = meguide_sample(
                g, lambda_d, lambda_f, extra_cfg, rng, cache=cache, root=node
            )
        else:
            # baselines: a rooted BFS ball gives guaranteed coverage
            size = min(extra_cfg.target_size or 1, g.num_nodes)
            sub = bfs_sample(g, size, rng, root=node)
        extras.append(sub)
        covered.update(sub.nodes.tolist())
    subgraphs = list(batch) + extras
    return TestSubgraphSet(
        subgraphs=subgraphs,
        coverage=coverage_of(subgraphs),
        extras_count=len(extras),
    )


def aggregate_representations(
    model: GcnModel, tset: TestSubgraphSet, g: Graph
) -> AggregatedRepresentations:
    """Mean of each node's per-subgraph representations, float64."""
    nodes = np.asarray(sorted(tset.coverage.keys()), dtype=np.int64)
    index = {int(n): i for i, n in enumerate(nodes)}
    sums = np.zeros((nodes.shape[0], model.hidden_dim), dtype=np.float64)
    counts = np.zeros(nodes.shape[0], dtype=np.int64)
    for sub in tset.subgraphs:
        adj = normalize_adjacency(sub)
        reps = node_representations(model, adj, g.features[sub.nodes])
        rows = np.asarray([index[int(n)] for n in sub.nodes], dtype=np.int64)
        np.add.at(sums, rows, reps)
        np.add.at(counts, rows, 1)
    return AggregatedRepresentations(
        H_agg=sums / counts[:, None], nodes=nodes, node_index=index
    )


def head_logits(head: PredictorHead, H: np.ndarray) -> np.ndarray:
    logits = H @ head.W
    if head.b is not None:
        logits = logits + head.b
    return logits


def predictor_loss_and_grads(
    head: PredictorHead,
    H: np.ndarray,
    labels: np.ndarray,
    rows: np.ndarray,
    weight_decay: float,
):
    """Softmax-regression loss and gradients over the given rows."""
    Hs = H[rows]
    ys = labels[rows]
    logits = head_logits(head, Hs)
    logp = log_softmax(logits)
    k = rows.shape[0]
    loss = -float(logp[np.arange(k), ys].mean())
    loss += 0.5 * weight_decay * float(np.sum(head.W * head.W))
    dlogits = np.exp(logp)
    dlogits[np.arange(k), ys] -= 1.0
    dlogits /= k
    grads = {"W": Hs.T @ dlogits + weight_decay * head.W}
    if head.b is not None:
        grads["b"] = dlogits.sum(axis=0)
    return loss, grads


def train_predictor(
    H_agg: np.ndarray,
    labels: np.ndarray,
    train_rows: np.ndarray,
    lr: float = 0.01,
    weight_decay: float = 5e-4,
    epochs: int = 300,
    use_bias: bool = True,
) -> PredictorHead:
    """Full-batch Adam softmax regression on aggregated representations.

    ``train_rows`` indexes rows of H_agg (train-masked labeled nodes
    only; val/test labels never enter).
    """
    rows = np.asarray(train_rows, dtype=np.int64)
    if rows.size == 0:
        raise ConfigurationError("no labeled covered node to train the predictor")
    h = H_agg.shape[1]
    c = int(labels[rows].max()) + 1
    c = max(c, int(labels.max()) + 1)
    head = PredictorHead(
        W=np.zeros((h, c), dtype=np.float64),
        b=np.zeros(c, dtype=np.float64) if use_bias else None,
    )
    params = {"W": head.W}
    if head.b is not None:
        params["b"] = head.b
    state = init_adam(params)
    for _ in range(epochs):
        _, grads = predictor_loss_and_grads(head, H_agg, labels, rows, weight_decay)
        adam_step(state, params, grads, lr=lr)
    return head


def predict(head: PredictorHead, agg: AggregatedRepresentations, nodes):
    """Predicted labels and class probabilities for covered nodes.

    Ties in the probability row go to the lowest class index.
    """
    rows = []
    for n in nodes:
        try:
            rows.append(agg.node_index[int(n)])
        except KeyError:
            raise CoverageError(f"node {n} is not covered by any subgraph")
    rows = np.asarray(rows, dtype=np.int64)
    logits = head_logits(head, agg.H_agg[rows])
    probs = np.exp(log_softmax(logits))
    return np.argmax(probs, axis=1), probs


def fast_validation_path(model: GcnModel, batch: list, g: Graph, adjacencies=None):
    """Cheap mid-training validation accuracy.

    Aggregation is restricted to the batch (no extras) and the current
    second GCN layer stands in for the predictor head. Used only for
    early stopping. Returns (accuracy, warning_or_None).
    """
    val_nodes = np.flatnonzero(g.val_mask & (g.labels >= 0))
    val_set = set(val_nodes.tolist())
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for k, sub in enumerate(batch):
        hits = [i for i, n in enumerate(sub.nodes.tolist()) if n in val_set]
        if not hits:
            continue
        if adjacencies is not None:
            adj = adjacencies.get(k)
            if adj is None:
                adj = adjacencies[k] = normalize_adjacency(sub)
        else:
            adj = normalize_adjacency(sub)
        reps = node_representations(model, adj, g.features[sub.nodes])
        for i in hits:
            n = int(sub.nodes[i])
            if n in sums:
                sums[n] = sums[n] + reps[i]
                counts[n] += 1
            else:
                sums[n] = reps[i].copy()
                counts[n] = 1
    if not sums:
        return 0.0, "no validation node covered by the batch"
    nodes = np.asarray(sorted(sums.keys()), dtype=np.int64)
    H = np.stack([sums[int(n)] / counts[int(n)] for n in nodes])
    pred = np.argmax(H @ model.W1, axis=1)
    return float(np.mean(pred == g.labels[nodes])), None


def full_graph_accuracy(model: GcnModel, g: Graph, mask: np.ndarray) -> float:
    """Feed the whole graph through the GCN once; the ablation baseline."""
    from .gcn import forward

    whole = induced_subgraph(g, np.arange(g.num_nodes, dtype=np.int64), root=0)
    adj = normalize_adjacency(whole)
    logits, _ = forward(model, adj, g.features, train_mode=False)
    return masked_accuracy(logits, g.labels, mask)
