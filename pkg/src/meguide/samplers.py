"""Subgraph samplers: metric-guided expansion plus Random and BFS baselines.

The metric-guided sampler grows a subgraph outward from a random root
for floor(lambda_d / 2) expansion rounds, admitting a neighbor only when
the pairwise feature smoothness of the connecting edge reaches
rho * lambda_f. Each sampler is a pure function of (graph, config, rng):
the same seed reproduces the identical subgraph bit for bit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import PreconditionError, SamplerError
from .graph import Graph, Subgraph, induced_subgraph, neighbors
from .metrics import EdgeSmoothnessCache

logger = logging.getLogger("meguide")

SAMPLER_KINDS = ("meguide", "random", "bfs")
EDGE_MODES = ("expansion-edges", "induced-closure")
ROOT_POOLS = ("train", "all")


@dataclass
class SamplerConfig:
    kind: str = "meguide"
    rho: float = 0.3
    max_steps: int | None = None  # None: floor(lambda_d / 2), clamped to >= 1
    target_size: int | None = None  # random / bfs only
    min_size: int = 2
    max_root_retries: int = 10
    edge_mode: str = "expansion-edges"
    roots: str = "train"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise PreconditionError(f"unknown sampler kind {self.kind!r}")
        if self.edge_mode not in EDGE_MODES:
            raise PreconditionError(f"unknown edge mode {self.edge_mode!r}")
        if self.roots not in ROOT_POOLS:
            raise PreconditionError(f"unknown root pool {self.roots!r}")
        # rho = 0 is allowed: it degenerates to a plain BFS ball, which the
        # property suite exercises directly.
        if self.rho < 0:
            raise PreconditionError("rho must be non-negative")
        if self.min_size < 1:
            raise PreconditionError("min_size must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise PreconditionError("max_steps must be >= 1")


def resolve_steps(cfg: SamplerConfig, lambda_d: float) -> int:
    """Expansion step budget: floor(lambda_d / 2), never below 1."""
    if cfg.max_steps is not None:
        return cfg.max_steps
    return max(1, math.floor(lambda_d / 2.0))


def root_pool(g: Graph, cfg: SamplerConfig) -> np.ndarray:
    """Candidate roots: train-masked nodes by default, all nodes otherwise."""
    if cfg.roots == "train":
        pool = np.flatnonzero(g.train_mask)
        if pool.size:
            return pool
        logger.warning("no train-masked nodes; falling back to all-node roots")
    return np.arange(g.num_nodes, dtype=np.int64)


def _finalize(g, node_flags, edge_list, root, steps_used, edge_mode, warning=None):
    nodes = np.flatnonzero(node_flags).astype(np.int64)
    if edge_mode == "induced-closure":
        edges = induced_subgraph(g, nodes, root=root).edges
    elif edge_list:
        edges = np.unique(np.asarray(edge_list, dtype=np.int64), axis=0)
    else:
        edges = np.zeros((0, 2), dtype=np.int64)
    return Subgraph(
        nodes=nodes,
        edges=edges,
        root=int(root),
        expansion_steps_used=steps_used,
        warning=warning,
    )


def _expand_from_root(g, root, steps, threshold, cache, edge_mode):
    """One expansion run of the metric-guided sampler from a fixed root.

    A neighbor already sampled before the current round never re-enters;
    within one round the admission test uses the node set as it stood at
    the round start, so every frontier edge that passes the threshold is
    kept regardless of frontier iteration order.
    """
    in_sub = np.zeros(g.num_nodes, dtype=bool)
    in_sub[root] = True
    frontier = [int(root)]
    edge_list: list[tuple[int, int]] = []
    steps_used = 0
    for _ in range(steps):
        if not frontier:
            break
        new_nodes: set[int] = set()
        for vi in frontier:
            nbrs = neighbors(g, vi)
            if nbrs.size == 0:
                continue
            ok = (~in_sub[nbrs]) & (cache.row(vi) >= threshold)
            if not ok.any():
                continue
            admitted = nbrs[ok]
            lo = np.minimum(admitted, vi)
            hi = np.maximum(admitted, vi)
            edge_list.extend(zip(lo.tolist(), hi.tolist()))
            new_nodes.update(admitted.tolist())
        if not new_nodes:
            break
        committed = sorted(new_nodes)
        in_sub[committed] = True
        frontier = committed
        steps_used += 1
    return _finalize(g, in_sub, edge_list, root, steps_used, edge_mode)


def meguide_sample(
    g: Graph,
    lambda_d: float,
    lambda_f: float,
    cfg: SamplerConfig,
    rng: np.random.Generator,
    cache: EdgeSmoothnessCache | None = None,
    root: int | None = None,
) -> Subgraph:
    """Metric-guided expansion sampling.

    When the expansion starves below ``cfg.min_size``, a fresh root is
    drawn up to ``cfg.max_root_retries`` times and the largest attempt is
    returned (with a warning on the subgraph, never an error). Passing
    ``root`` pins the root and disables retries.
    """
    if g.num_edges == 0:
        raise SamplerError("cannot sample from a graph with no edges")
    if cache is None:
        cache = EdgeSmoothnessCache(g)
    steps = resolve_steps(cfg, lambda_d)
    threshold = cfg.rho * lambda_f

    if root is not None:
        sub = _expand_from_root(g, int(root), steps, threshold, cache, cfg.edge_mode)
        if sub.num_nodes < cfg.min_size:
            sub.warning = f"pinned root {root}: size {sub.num_nodes} < min_size {cfg.min_size}"
        return sub

    pool = root_pool(g, cfg)
    best = None
    attempts = 1 + cfg.max_root_retries
    for _ in range(attempts):
        r = int(pool[rng.integers(pool.size)])
        sub = _expand_from_root(g, r, steps, threshold, cache, cfg.edge_mode)
        if best is None or sub.num_nodes > best.num_nodes:
            best = sub
        if sub.num_nodes >= cfg.min_size:
            return sub
    best.warning = (
        f"min_size {cfg.min_size} unreachable after {attempts} root attempts; "
        f"returning largest ({best.num_nodes} nodes)"
    )
    return best


def random_sample(g: Graph, target_size: int, rng: np.random.Generator) -> Subgraph:
    """Uniform node sample without replacement; edges are the induced closure."""
    if not 1 <= target_size <= g.num_nodes:
        raise PreconditionError(
            f"target_size {target_size} outside [1, {g.num_nodes}]"
        )
    drawn = rng.permutation(g.num_nodes)[:target_size]
    return induced_subgraph(g, drawn, root=int(drawn[0]))


def bfs_sample(
    g: Graph,
    target_size: int,
    rng: np.random.Generator,
    root: int | None = None,
) -> Subgraph:
    """BFS ball truncated at exactly target_size nodes.

    The final frontier is cut by ascending global id. If the root's
    component is smaller than the target, the whole component is
    returned with a warning.
    """
    if not 1 <= target_size <= g.num_nodes:
        raise PreconditionError(
            f"target_size {target_size} outside [1, {g.num_nodes}]"
        )
    if root is None:
        root = int(rng.integers(g.num_nodes))
    selected = np.zeros(g.num_nodes, dtype=bool)
    selected[root] = True
    count = 1
    frontier = [int(root)]
    levels = 0
    warning = None
    while count < target_size:
        nxt: set[int] = set()
        for v in frontier:
            nbrs = neighbors(g, v)
            nxt.update(nbrs[~selected[nbrs]].tolist())
        if not nxt:
            warning = (
                f"component of root {root} has only {count} nodes "
                f"(target {target_size})"
            )
            break
        level_nodes = sorted(nxt)
        room = target_size - count
        take = level_nodes[:room]
        selected[take] = True
        count += len(take)
        frontier = take
        levels += 1
    sub = induced_subgraph(g, np.flatnonzero(selected), root=root)
    sub.expansion_steps_used = levels
    sub.warning = warning
    return sub


def sample_one(
    g: Graph,
    cfg: SamplerConfig,
    rng: np.random.Generator,
    lambda_d: float = 0.0,
    lambda_f: float = 0.0,
    cache: EdgeSmoothnessCache | None = None,
) -> Subgraph:
    """Dispatch on cfg.kind; baselines draw their root from the same pool."""
    if cfg.kind == "meguide":
        return meguide_sample(g, lambda_d, lambda_f, cfg, rng, cache=cache)
    if cfg.target_size is None:
        raise PreconditionError(f"{cfg.kind} sampler requires target_size")
    if cfg.kind == "random":
        return random_sample(g, cfg.target_size, rng)
    pool = root_pool(g, cfg)
    root = int(pool[rng.integers(pool.size)])
    return bfs_sample(g, cfg.target_size, rng, root=root)


def with_rho(cfg: SamplerConfig, rho: float) -> SamplerConfig:
    return replace(cfg, rho=rho)


# ---------------------------------------------------------------------------
# JSON records


def subgraph_to_record(sub: Subgraph) -> dict:
    return {
        "root": int(sub.root),
        "nodes": sub.nodes.tolist(),
        "edges": [[int(u), int(v)] for u, v in sub.edges.tolist()],
        "expansion_steps_used": int(sub.expansion_steps_used),
        "warning": sub.warning,
    }


def subgraph_from_record(rec: dict) -> Subgraph:
    edges = np.asarray(rec["edges"], dtype=np.int64).reshape(-1, 2)
    return Subgraph(
        nodes=np.asarray(rec["nodes"], dtype=np.int64),
        edges=edges,
        root=int(rec["root"]),
        expansion_steps_used=int(rec.get("expansion_steps_used", 0)),
        warning=rec.get("warning"),
    )
