"""Subgraph mini-batch training loop.

A fixed set of M subgraphs is sampled up front; each iteration picks one
(per-epoch shuffled round-robin), computes the loss over its train-masked
nodes and applies one Adam step to the full model weights. Validation
runs periodically through the prediction module's fast path; the final
test accuracy comes from the full aggregation-based prediction pipeline
on the best checkpoint.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .exceptions import ConfigurationError, MeguideError, SkipBatch
from .gcn import (
    init_adam,
    init_model,
    adam_step,
    loss_and_grads,
    normalize_adjacency,
    record_adjacency_sizes,
)
from .graph import Graph
from .metrics import (
    EdgeSmoothnessCache,
    connection_failure_distance,
    feature_smoothness_graph,
)
from .prediction import (
    aggregate_representations,
    build_test_set,
    fast_validation_path,
    full_graph_accuracy,
    predict,
    train_predictor,
)
from .samplers import SamplerConfig, resolve_steps, sample_one

logger = logging.getLogger("meguide")


@dataclass
class TrainConfig:
    M: int = 32
    iterations: int = 400
    rho: float = 0.3
    lr: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.5
    hidden: int = 32
    patience: int = 50  # evaluations without val improvement
    eval_every: int = 10  # iterations between evaluations
    seed: int = 0
    sampler_kind: str = "meguide"
    edge_mode: str = "expansion-edges"
    min_size: int = 2
    max_root_retries: int = 10
    roots: str = "train"
    max_steps: int | None = None
    target_size: int | None = None
    resample_every: int = 0  # 0: sample the batch set once (default)
    predictor_epochs: int = 300
    predictor_lr: float = 0.01
    pool_cap: int = 2000
    ablation_fullgraph: bool = True

    def __post_init__(self):
        if self.M < 1:
            raise ConfigurationError("M must be >= 1")
        if self.iterations < 1:
            raise ConfigurationError("iterations must be >= 1")
        # lr = 0 is allowed so frozen-weight runs stay expressible
        for name in ("lr", "weight_decay", "dropout", "rho"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("dropout must be in [0, 1)")

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            kind=self.sampler_kind,
            rho=self.rho,
            max_steps=self.max_steps,
            target_size=self.target_size,
            min_size=self.min_size,
            max_root_retries=self.max_root_retries,
            edge_mode=self.edge_mode,
            roots=self.roots,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class RunReport:
    final_test_accuracy: float
    best_val_accuracy: float
    wall_time_seconds: float
    wall_time_to_best_seconds: float
    iterations_run: int
    epochs_run: int
    skipped_batches: int
    lambda_f: float
    lambda_d: float
    expansion_steps: int
    config_hash: str
    seed: int
    best_iteration: int = 0
    stopped_early: bool = False
    extras_count: int = 0
    max_adjacency_nodes: int = 0
    adjacency_calls_in_loop: int = 0
    max_batch_subgraph_nodes: int = 0
    fullgraph_test_accuracy: float | None = None
    aggregation_delta: float | None = None
    warnings: list = field(default_factory=list)
    decisions: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("final_test_accuracy", "best_val_accuracy"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise MeguideError(f"{name}={v} outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def build_batch_set(
    g: Graph,
    cfg: TrainConfig,
    lambda_d: float,
    lambda_f: float,
    cache: EdgeSmoothnessCache | None = None,
):
    """Sample the M training subgraphs with seeds seed+1 .. seed+M."""
    scfg = cfg.sampler_config()
    batch = []
    for k in range(1, cfg.M + 1):
        rng = np.random.default_rng(cfg.seed + k)
        batch.append(
            sample_one(g, scfg, rng, lambda_d=lambda_d, lambda_f=lambda_f, cache=cache)
        )
    manifest = {
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "sampler_kind": cfg.sampler_kind,
        "rho": cfg.rho,
        "lambda_d": lambda_d,
        "lambda_f": lambda_f,
        "expansion_steps": resolve_steps(scfg, lambda_d),
        "roots": [int(s.root) for s in batch],
        "sizes": [s.num_nodes for s in batch],
        "warnings": [s.warning for s in batch if s.warning],
    }
    return batch, manifest


def train(g: Graph, cfg: TrainConfig, metrics=None):
    """Run the full pipeline; returns (best model, batch set, RunReport).

    ``metrics`` may carry a precomputed (lambda_f, lambda_d) pair to skip
    the metric pass (the sweep command reuses it across rho values).
    """
    t_start = time.perf_counter()
    if not g.train_mask.any():
        raise ConfigurationError("training requires a non-empty train mask")

    if metrics is None:
        lambda_f = feature_smoothness_graph(g)
        lambda_d, _ = connection_failure_distance(
            g,
            np.flatnonzero(g.train_mask),
            pool_cap=cfg.pool_cap,
            rng=np.random.default_rng(cfg.seed),
        )
    else:
        lambda_f, lambda_d = metrics

    cache = EdgeSmoothnessCache(g)
    batch, manifest = build_batch_set(g, cfg, lambda_d, lambda_f, cache=cache)
    warnings = list(manifest["warnings"])

    rng = np.random.default_rng(cfg.seed)
    model = init_model(g.feature_dim, cfg.hidden, g.num_classes, cfg.dropout, rng)
    params = model.params()
    state = init_adam(params)

    adjacencies: dict[int, object] = {}
    history = []  # (iteration, loss, val_acc or None)
    skipped = 0
    best_val = -1.0
    best_model = None
    best_iter = 0
    t_best = t_start
    evals_since_best = 0
    stopped_early = False
    it = 0
    order = None

    with record_adjacency_sizes() as adj_sizes:
        calls_before = len(adj_sizes)
        epoch_successes = 0
        for it in range(1, cfg.iterations + 1):
            pos = (it - 1) % len(batch)
            if pos == 0:
                epoch = (it - 1) // len(batch)
                if it > 1 and epoch_successes == 0:
                    raise ConfigurationError(
                        "every batch in an epoch was skipped: no subgraph "
                        "contains a labeled train node"
                    )
                epoch_successes = 0
                if cfg.resample_every > 0 and epoch > 0 and (
                    epoch % cfg.resample_every == 0
                ):
                    refreshed = replace(
                        cfg, seed=cfg.seed + 1_000_003 * epoch
                    )
                    batch, refresh_manifest = build_batch_set(
                        g, refreshed, lambda_d, lambda_f, cache=cache
                    )
                    warnings.extend(
                        w for w in refresh_manifest["warnings"]
                        if w not in warnings
                    )
                    adjacencies.clear()
                order = rng.permutation(len(batch))
            idx = int(order[pos])
            sub = batch[idx]
            adj = adjacencies.get(idx)
            if adj is None:
                adj = adjacencies[idx] = normalize_adjacency(sub)
            try:
                loss, gW0, gW1 = loss_and_grads(
                    model,
                    adj,
                    g.features[sub.nodes],
                    g.labels[sub.nodes],
                    g.train_mask[sub.nodes],
                    weight_decay=cfg.weight_decay,
                    train_mode=True,
                    rng=rng,
                )
            except SkipBatch:
                skipped += 1
                history.append((it, None, None))
                continue
            if not np.isfinite(loss):
                raise MeguideError(f"non-finite loss {loss} at iteration {it}")
            epoch_successes += 1
            adam_step(state, params, {"W0": gW0, "W1": gW1}, lr=cfg.lr)

            val_acc = None
            if it % cfg.eval_every == 0:
                val_acc, warn = fast_validation_path(model, batch, g, adjacencies)
                if warn and warn not in warnings:
                    warnings.append(warn)
                if val_acc > best_val:
                    best_val = val_acc
                    best_model = model.copy()
                    best_iter = it
                    t_best = time.perf_counter()
                    evals_since_best = 0
                else:
                    evals_since_best += 1
                    if evals_since_best >= cfg.patience:
                        stopped_early = True
                        history.append((it, loss, val_acc))
                        break
            history.append((it, loss, val_acc))
        loop_calls = len(adj_sizes) - calls_before
        max_adj = max(adj_sizes) if adj_sizes else 0

    if best_model is None:
        val_acc, warn = fast_validation_path(model, batch, g, adjacencies)
        if warn and warn not in warnings:
            warnings.append(warn)
        best_val = val_acc
        best_model = model.copy()
        best_iter = it
        t_best = time.perf_counter()

    # prediction phase on the best checkpoint (outside the training scope
    # that the adjacency instrumentation audits)
    scfg = cfg.sampler_config()
    tset = build_test_set(
        g,
        batch,
        scfg,
        lambda_d,
        lambda_f,
        rng=np.random.default_rng(cfg.seed + cfg.M + 1),
        cache=cache,
    )
    agg = aggregate_representations(best_model, tset, g)
    train_nodes = np.flatnonzero(g.train_mask)
    train_rows = np.asarray([agg.node_index[int(n)] for n in train_nodes])
    head = train_predictor(
        agg.H_agg,
        g.labels[agg.nodes],
        train_rows,
        lr=cfg.predictor_lr,
        weight_decay=cfg.weight_decay,
        epochs=cfg.predictor_epochs,
    )
    test_nodes = np.flatnonzero(g.test_mask & (g.labels >= 0))
    if test_nodes.size:
        pred_labels, _ = predict(head, agg, test_nodes)
        test_acc = float(np.mean(pred_labels == g.labels[test_nodes]))
    else:
        test_acc = 0.0
        warnings.append("no labeled test nodes; final_test_accuracy set to 0")

    fullgraph_acc = None
    delta = None
    if cfg.ablation_fullgraph and test_nodes.size:
        fullgraph_acc = full_graph_accuracy(best_model, g, g.test_mask & (g.labels >= 0))
        delta = test_acc - fullgraph_acc

    report = RunReport(
        final_test_accuracy=test_acc,
        best_val_accuracy=max(best_val, 0.0),
        wall_time_seconds=time.perf_counter() - t_start,
        wall_time_to_best_seconds=t_best - t_start,
        iterations_run=it,
        epochs_run=(it + len(batch) - 1) // len(batch),
        skipped_batches=skipped,
        lambda_f=lambda_f,
        lambda_d=lambda_d,
        expansion_steps=manifest["expansion_steps"],
        config_hash=cfg.config_hash(),
        seed=cfg.seed,
        best_iteration=best_iter,
        stopped_early=stopped_early,
        extras_count=tset.extras_count,
        max_adjacency_nodes=max_adj,
        adjacency_calls_in_loop=loop_calls,
        max_batch_subgraph_nodes=max(s.num_nodes for s in batch),
        fullgraph_test_accuracy=fullgraph_acc,
        aggregation_delta=delta,
        warnings=warnings,
        decisions={
            "root_pool": cfg.roots,
            "early_stop_criterion": "patience on fast-path validation accuracy",
            "weight_init": "glorot-uniform, no biases",
            "batch_resampling": "once before training"
            if cfg.resample_every == 0
            else f"every {cfg.resample_every} epochs",
        },
    )
    return best_model, batch, report, history


def rho_sweep(g: Graph, rhos, base_cfg: TrainConfig):
    """One full train/eval per rho with the seed held fixed."""
    if len(set(rhos)) != len(list(rhos)):
        raise ConfigurationError("sweep rho values must be unique")
    lambda_f = feature_smoothness_graph(g)
    lambda_d, _ = connection_failure_distance(
        g,
        np.flatnonzero(g.train_mask),
        pool_cap=base_cfg.pool_cap,
        rng=np.random.default_rng(base_cfg.seed),
    )
    results = []
    for rho in rhos:
        if rho < 0:
            raise ConfigurationError("rho must be non-negative")
        cfg = replace(base_cfg, rho=float(rho))
        _, _, report, _ = train(g, cfg, metrics=(lambda_f, lambda_d))
        logger.info("sweep rho=%.3f test_acc=%.4f", rho, report.final_test_accuracy)
        results.append((float(rho), report))
    return results
