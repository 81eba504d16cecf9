"""Deterministic synthetic dataset generators.

These back the ``gen-fixture`` CLI command and the statistical property
suites, so tests never depend on external downloads. Every generator is
a pure function of its parameter dataclass (including the seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import DatasetBundle, build_graph


@dataclass
class TwoClusterParams:
    """Two feature clusters with controllable mean gap.

    Cluster means differ by ``gap`` in every dimension, so the expected
    inter-cluster pairwise smoothness exceeds the intra-cluster one by
    gap**2.
    """

    n_nodes: int = 200
    feature_dim: int = 8
    gap: float = 1.0
    noise: float = 0.1
    p_intra: float = 0.06
    p_inter: float = 0.015
    seed: int = 0


def two_cluster_bundle(params: TwoClusterParams) -> DatasetBundle:
    rng = np.random.default_rng(params.seed)
    n = params.n_nodes
    half = n // 2
    labels = np.zeros(n, dtype=np.int64)
    labels[half:] = 1

    iu, ju = np.triu_indices(n, k=1)
    p = np.where(labels[iu] == labels[ju], params.p_intra, params.p_inter)
    keep = rng.random(iu.size) < p
    edges = np.stack([iu[keep], ju[keep]], axis=1).astype(np.int64)

    means = np.where(labels[:, None] == 0, 0.0, params.gap)
    feats = means + params.noise * rng.standard_normal((n, params.feature_dim))

    train = np.ones(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    g = build_graph(edges, feats.astype(np.float32), labels, train, val, test)
    return DatasetBundle(
        graph=g,
        name=f"two-cluster-gap{params.gap}-seed{params.seed}",
        provenance=f"synthetic:two-cluster:{params}",
    )


@dataclass
class CitationParams:
    """Homophilous citation-style network with sparse binary bag-of-words
    features and a stratified planetoid-style split.

    Classes are assigned round-robin (node i gets class i % num_classes)
    so the first train_per_class * num_classes ids form a stratified
    train set. Each class is wired as a random cycle plus a partial
    random matching: near-constant degree keeps the graph-level
    smoothness within a few multiples of the typical per-edge value, so
    the sampler threshold at moderate rho admits a meaningful fraction
    of edges. Document lengths are Pareto-tailed, which spreads the
    per-edge smoothness the way real word-count distributions do.
    """

    n_nodes: int = 900
    num_classes: int = 7
    words_per_class: int = 25
    shared_words: int = 160
    class_word_frac: float = 0.5
    match_p: float = 0.5
    inter_edge_frac: float = 0.07
    len_base: int = 8
    len_pareto_shape: float = 2.2
    len_pareto_scale: float = 26.0
    len_cap: int = 160
    train_per_class: int = 20
    val_count: int = 300
    seed: int = 0

    @property
    def feature_dim(self) -> int:
        return self.num_classes * self.words_per_class + self.shared_words


def citation_bundle(params: CitationParams) -> DatasetBundle:
    rng = np.random.default_rng(params.seed)
    n, C = params.n_nodes, params.num_classes
    labels = np.arange(n, dtype=np.int64) % C

    pairs = []
    for c in range(C):
        members = np.flatnonzero(labels == c)
        order = members[rng.permutation(members.size)]
        for j in range(order.size):
            pairs.append((int(order[j]), int(order[(j + 1) % order.size])))
        match = members[rng.permutation(members.size)]
        for j in range(0, match.size - 1, 2):
            if rng.random() < params.match_p:
                pairs.append((int(match[j]), int(match[j + 1])))
    n_inter = int(round(params.inter_edge_frac * n))
    placed = 0
    while placed < n_inter:
        u, v = rng.integers(n), rng.integers(n)
        if labels[u] != labels[v]:
            pairs.append((int(u), int(v)))
            placed += 1
    edges = np.asarray(pairs, dtype=np.int64)

    d = params.feature_dim
    shared_lo = C * params.words_per_class
    feats = np.zeros((n, d), dtype=np.float32)
    for v in range(n):
        c = int(labels[v])
        length = int(
            min(
                params.len_base + rng.pareto(params.len_pareto_shape)
                * params.len_pareto_scale,
                params.len_cap,
            )
        )
        from_class = rng.random(length) < params.class_word_frac
        class_words = rng.integers(
            c * params.words_per_class, (c + 1) * params.words_per_class, size=length
        )
        shared = rng.integers(shared_lo, d, size=length)
        feats[v, np.where(from_class, class_words, shared)] = 1.0

    train = np.zeros(n, dtype=bool)
    train[: params.train_per_class * C] = True
    val = np.zeros(n, dtype=bool)
    val_end = min(params.train_per_class * C + params.val_count, n)
    val[params.train_per_class * C : val_end] = True
    test = np.zeros(n, dtype=bool)
    test[val_end:] = True

    g = build_graph(edges, feats, labels, train, val, test)
    return DatasetBundle(
        graph=g,
        name=f"citation-n{n}-seed{params.seed}",
        provenance=f"synthetic:citation:{params}",
    )


def path_bundle(n_nodes: int = 3) -> DatasetBundle:
    """Tiny path graph fixture: node i has feature [i], label 0, train mask."""
    edges = np.asarray([(i, i + 1) for i in range(n_nodes - 1)], dtype=np.int64)
    feats = np.arange(n_nodes, dtype=np.float32)[:, None]
    labels = np.zeros(n_nodes, dtype=np.int64)
    train = np.ones(n_nodes, dtype=bool)
    val = np.zeros(n_nodes, dtype=bool)
    test = np.zeros(n_nodes, dtype=bool)
    g = build_graph(edges, feats, labels, train, val, test)
    return DatasetBundle(graph=g, name=f"path{n_nodes}", provenance="synthetic:path")
