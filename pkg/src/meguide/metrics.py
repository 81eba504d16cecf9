"""Feature Smoothness and Connection Failure Distance.

Feature smoothness measures how dissimilar connected nodes are
(graph-level and per-edge); connection failure distance is the average,
over a labeled node pool, of each node's maximum hop distance to a
same-label node. Both guide the metric-guided sampler.

All accumulation is done in float64 regardless of the stored feature
precision.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import (
    EmptyInputError,
    PreconditionError,
    UndefinedMetricError,
)
from .graph import Graph, neighbors

UNREACHABLE = -1


@dataclass
class MetricsReport:
    lambda_f: float
    lambda_d: float
    lambda_d_mode: str  # "exact" | "estimated"
    num_sources_used: int
    edge_smoothness: dict | None = None
    lambda_f_row_normalized: float | None = None

    def to_dict(self, round_to: int = 6) -> dict:
        out = {
            "lambda_f": round(float(self.lambda_f), round_to),
            "lambda_d": round(float(self.lambda_d), round_to),
            "lambda_d_mode": self.lambda_d_mode,
            "num_sources_used": self.num_sources_used,
        }
        if self.lambda_f_row_normalized is not None:
            out["lambda_f_row_normalized"] = round(
                float(self.lambda_f_row_normalized), round_to
            )
        if self.edge_smoothness is not None:
            out["edge_smoothness"] = {
                f"{u},{v}": round(float(s), round_to)
                for (u, v), s in sorted(self.edge_smoothness.items())
            }
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), indent=2, **kwargs)


def _adjacency_matrix(g: Graph) -> sp.csr_matrix:
    data = np.ones(g.col_indices.shape[0], dtype=np.float64)
    return sp.csr_matrix(
        (data, g.col_indices, g.row_offsets), shape=(g.num_nodes, g.num_nodes)
    )


def feature_smoothness_graph(g: Graph, X: np.ndarray | None = None) -> float:
    """Graph-level feature smoothness.

    For each node v, sum the difference vectors (x_v - x_v') over its
    neighbors, square elementwise, sum over nodes and dimensions, then
    divide by (undirected edge count * feature dimension).
    """
    if g.num_edges == 0:
        raise UndefinedMetricError("feature smoothness undefined on a zero-edge graph")
    if g.feature_dim < 1:
        raise UndefinedMetricError("feature smoothness needs at least one dimension")
    X64 = np.asarray(X if X is not None else g.features, dtype=np.float64)
    neighbor_sums = _adjacency_matrix(g) @ X64
    summed_diff = g.degrees[:, None] * X64 - neighbor_sums
    numerator = float(np.sum(summed_diff * summed_diff))
    return numerator / (g.num_edges * g.feature_dim)


def feature_smoothness_pair(g: Graph, vi: int, vj: int) -> float:
    """Per-edge feature smoothness; symmetric in its arguments."""
    row = neighbors(g, vi)
    pos = np.searchsorted(row, vj)
    if pos >= row.shape[0] or row[pos] != vj:
        raise PreconditionError(f"nodes {vi} and {vj} are not adjacent")
    xi = g.features[vi].astype(np.float64)
    xj = g.features[vj].astype(np.float64)
    diff = xi - xj
    return float(np.sum(diff * diff)) / g.feature_dim


class EdgeSmoothnessCache:
    """Lazy, memoized per-edge smoothness lookup over a fixed graph.

    Values are computed one CSR row at a time so samplers revisiting the
    same frontier nodes pay for each row once. Concurrent insert of the
    same row writes identical values, so last-writer-wins is safe.
    """

    def __init__(self, g: Graph, X: np.ndarray | None = None):
        self.graph = g
        self._X = np.asarray(X if X is not None else g.features, dtype=np.float64)
        self._rows: dict[int, np.ndarray] = {}

    def row(self, u: int) -> np.ndarray:
        """Smoothness values aligned with u's CSR neighbor slice."""
        vals = self._rows.get(u)
        if vals is None:
            nbrs = neighbors(self.graph, u)
            diff = self._X[u][None, :] - self._X[nbrs]
            vals = (diff * diff).sum(axis=1) / self.graph.feature_dim
            self._rows[u] = vals
        return vals

    def pair(self, u: int, v: int) -> float:
        row = neighbors(self.graph, u)
        pos = np.searchsorted(row, v)
        if pos >= row.shape[0] or row[pos] != v:
            raise PreconditionError(f"nodes {u} and {v} are not adjacent")
        return float(self.row(u)[pos])

    def all_edges(self) -> dict:
        """Every undirected edge (u, v) with u < v mapped to its smoothness."""
        out = {}
        for u in range(self.graph.num_nodes):
            nbrs = neighbors(self.graph, u)
            vals = self.row(u)
            for v, s in zip(nbrs.tolist(), vals.tolist()):
                if u < v:
                    out[(u, v)] = s
        return out


# ---------------------------------------------------------------------------
# hop distances


def bfs_hops(g: Graph, src: int) -> np.ndarray:
    """Hop count from src to every node; UNREACHABLE (-1) where disconnected."""
    if not 0 <= src < g.num_nodes:
        raise IndexError(f"node {src} out of range")
    dist = np.full(g.num_nodes, UNREACHABLE, dtype=np.int64)
    dist[src] = 0
    frontier = np.asarray([src], dtype=np.int64)
    level = 0
    while frontier.size:
        starts = g.row_offsets[frontier]
        counts = g.row_offsets[frontier + 1] - starts
        total = int(counts.sum())
        if total == 0:
            break
        shifted = np.repeat(starts - np.concatenate(([0], np.cumsum(counts)[:-1])), counts)
        nbrs = g.col_indices[np.arange(total, dtype=np.int64) + shifted]
        fresh = np.unique(nbrs[dist[nbrs] == UNREACHABLE])
        level += 1
        dist[fresh] = level
        frontier = fresh
    return dist


def hop_distance(g: Graph, src: int, targets) -> dict:
    """Smallest hop counts from src to each target node."""
    dist = bfs_hops(g, src)
    return {int(t): int(dist[t]) for t in targets}


def connection_failure_distance(
    g: Graph,
    node_pool,
    pool_cap: int = 2000,
    rng: np.random.Generator | None = None,
    threads: int = 1,
) -> tuple[float, int]:
    """Average over the pool of each node's max hop distance to a
    same-label pool node.

    Unreachable same-label partners count as distance 0; a node with no
    same-label partner in the pool contributes 0. Pools larger than
    ``pool_cap`` are uniformly subsampled (seeded by ``rng``).
    """
    pool = np.unique(np.asarray(list(node_pool), dtype=np.int64))
    if pool.size == 0:
        raise EmptyInputError("connection_failure_distance: empty node pool")
    if np.any(g.labels[pool] < 0):
        raise PreconditionError("node pool contains unlabeled nodes")
    if pool.size > pool_cap:
        if rng is None:
            rng = np.random.default_rng(0)
        pool = np.sort(rng.choice(pool, size=pool_cap, replace=False))
    labels = g.labels[pool]

    def per_source(i: int) -> float:
        src = int(pool[i])
        mates = pool[(labels == labels[i])]
        mates = mates[mates != src]
        if mates.size == 0:
            return 0.0
        hops = bfs_hops(g, src)[mates]
        hops = np.where(hops == UNREACHABLE, 0, hops)
        return float(hops.max())

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool_exec:
            maxima = np.fromiter(
                pool_exec.map(per_source, range(pool.size)), dtype=np.float64
            )
    else:
        maxima = np.fromiter(
            (per_source(i) for i in range(pool.size)), dtype=np.float64
        )
    return float(maxima.mean()), int(pool.size)


# ---------------------------------------------------------------------------
# distributional statistics behind the sampler design


def smoothness_separation_statistic(params) -> float:
    """Inter-cluster minus intra-cluster mean pairwise smoothness on a
    synthetic two-cluster graph.

    Positive values mean cross-cluster edges carry larger feature
    divergence, the observable counterpart of the information-gain claim.
    """
    from .synth import two_cluster_bundle

    bundle = two_cluster_bundle(params)
    g = bundle.graph
    if g.num_edges == 0:
        raise PreconditionError("two-cluster generator produced no edges")
    cache = EdgeSmoothnessCache(g)
    inter, intra = [], []
    for (u, v), s in cache.all_edges().items():
        if g.labels[u] == g.labels[v]:
            intra.append(s)
        else:
            inter.append(s)
    if not inter or not intra:
        raise PreconditionError("generator produced no inter- or intra-cluster edges")
    return float(np.mean(inter) - np.mean(intra))


def same_label_hop_profile(g: Graph, node_pool) -> dict:
    """Same-label pair counts per hop distance within the pool.

    Returns {hop: (same_label_pairs, total_pairs)} over unordered
    reachable pairs. Unreachable pairs have no hop bucket.
    """
    pool = np.unique(np.asarray(list(node_pool), dtype=np.int64))
    if pool.size == 0:
        raise EmptyInputError("same_label_hop_profile: empty node pool")
    if np.any(g.labels[pool] < 0):
        raise PreconditionError("node pool contains unlabeled nodes")
    table: dict[int, list[int]] = {}
    for i in range(pool.size):
        src = int(pool[i])
        dist = bfs_hops(g, src)
        for j in range(i + 1, pool.size):
            h = int(dist[pool[j]])
            if h <= 0:
                continue
            same, total = table.get(h, (0, 0))
            table[h] = (
                same + int(g.labels[src] == g.labels[pool[j]]),
                total + 1,
            )
    return dict(sorted(table.items()))


def same_label_fraction(table: dict, hop_min=None, hop_max=None) -> float | None:
    """Aggregate same-label fraction over a hop range of a hop profile."""
    same = total = 0
    for h, (s, t) in table.items():
        if hop_min is not None and h < hop_min:
            continue
        if hop_max is not None and h > hop_max:
            continue
        same += s
        total += t
    return same / total if total else None


def compute_metrics_report(
    g: Graph,
    pool: str = "train",
    pool_cap: int = 2000,
    seed: int = 0,
    emit_edge_smoothness: bool = False,
    threads: int = 1,
) -> MetricsReport:
    """Assemble the metrics report used by the CLI and the trainer."""
    from .graph import row_normalize_features

    lam_f = feature_smoothness_graph(g)
    lam_f_norm = feature_smoothness_graph(g, X=row_normalize_features(g.features))
    if pool == "train":
        pool_nodes = np.flatnonzero(g.train_mask)
        mode = "estimated"
    elif pool == "all-labeled":
        pool_nodes = np.flatnonzero(g.labels >= 0)
        mode = "exact"
    else:
        raise PreconditionError(f"unknown pool kind {pool!r}")
    if pool_nodes.size == 0:
        raise EmptyInputError(f"pool {pool!r} selects no labeled nodes")
    lam_d, used = connection_failure_distance(
        g, pool_nodes, pool_cap=pool_cap, rng=np.random.default_rng(seed),
        threads=threads,
    )
    if used < pool_nodes.size:
        mode = "estimated"
    edge_map = None
    if emit_edge_smoothness:
        edge_map = EdgeSmoothnessCache(g).all_edges()
    return MetricsReport(
        lambda_f=lam_f,
        lambda_d=lam_d,
        lambda_d_mode=mode,
        num_sources_used=used,
        edge_smoothness=edge_map,
        lambda_f_row_normalized=lam_f_norm,
    )
