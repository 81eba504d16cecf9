"""Immutable undirected graph in CSR form, plus loading and serialization.

The on-disk native format is four text files in one directory:

    edges.txt     one "u v" pair per line, 0-based ids, '#' comments
    features.csv  one row per node in id order, d comma-separated reals
    labels.txt    one integer per line, -1 for unlabeled
    splits.txt    one of {train, val, test, none} per line

An optional binary cache (magic ``MGGR``) speeds up repeated loads of
large datasets.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import (
    EmptyInputError,
    ParseError,
    PreconditionError,
    ShapeError,
    ValidationError,
)

logger = logging.getLogger("meguide")

SENTINEL_UNLABELED = -1

CACHE_MAGIC = b"MGGR"
CACHE_VERSION = 1

SPLIT_TOKENS = ("train", "val", "test", "none")


@dataclass(eq=False)
class Graph:
    """Undirected graph with dense node features, labels and split masks.

    Each undirected edge is stored once per direction in the CSR arrays;
    ``num_edges`` counts undirected edges once. Instances are treated as
    immutable after construction.
    """

    num_nodes: int
    num_edges: int
    row_offsets: np.ndarray  # int64, len num_nodes + 1
    col_indices: np.ndarray  # int64, len 2 * num_edges
    features: np.ndarray  # float32, num_nodes x feature_dim
    labels: np.ndarray  # int64, -1 for unlabeled
    train_mask: np.ndarray  # bool
    val_mask: np.ndarray  # bool
    test_mask: np.ndarray  # bool
    num_classes: int
    feature_dim: int

    def degree(self, v: int) -> int:
        return int(self.row_offsets[v + 1] - self.row_offsets[v])

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)


@dataclass
class DatasetBundle:
    graph: Graph
    name: str
    provenance: str


@dataclass(eq=False)
class Subgraph:
    """A sampled node subset with its retained edges and id maps.

    ``nodes`` is sorted ascending and ``global_of_local`` is the same
    array: local id i maps to global id nodes[i]. ``edges`` holds global
    (u, v) pairs with u < v, lexicographically sorted.
    """

    nodes: np.ndarray  # int64, sorted ascending
    edges: np.ndarray  # int64, shape (k, 2), u < v, lexsorted
    root: int
    expansion_steps_used: int = 0
    warning: str | None = None
    local_of_global: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.local_of_global:
            self.local_of_global = {int(g): i for i, g in enumerate(self.nodes)}

    @property
    def num_nodes(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def global_of_local(self) -> np.ndarray:
        return self.nodes

    def local_edges(self) -> np.ndarray:
        """Edge list re-indexed to local ids, shape (k, 2)."""
        if self.edges.shape[0] == 0:
            return np.zeros((0, 2), dtype=np.int64)
        # nodes is sorted ascending, so local id == rank
        return np.searchsorted(self.nodes, self.edges).astype(np.int64)


def subgraphs_equal(a: Subgraph, b: Subgraph) -> bool:
    return (
        a.root == b.root
        and a.expansion_steps_used == b.expansion_steps_used
        and np.array_equal(a.nodes, b.nodes)
        and np.array_equal(a.edges, b.edges)
    )


def canonical_edges(pairs: np.ndarray) -> np.ndarray:
    """Deduplicated (u, v) pairs with u < v, lexsorted; drops self-loops."""
    if pairs.shape[0] == 0:
        return np.zeros((0, 2), dtype=np.int64)
    u = np.minimum(pairs[:, 0], pairs[:, 1])
    v = np.maximum(pairs[:, 0], pairs[:, 1])
    keep = u != v
    stacked = np.stack([u[keep], v[keep]], axis=1)
    if stacked.shape[0] == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(stacked, axis=0)


def build_graph(
    edge_pairs: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    train_mask: np.ndarray,
    val_mask: np.ndarray,
    test_mask: np.ndarray,
) -> Graph:
    """Assemble a validated Graph from raw arrays.

    Input edges may be directed, duplicated or contain self-loops; they
    are symmetrized, deduplicated and self-loops dropped (with a count
    logged). Features are stored as float32.
    """
    features = np.asarray(features, dtype=np.float32)
    if features.ndim != 2:
        raise ShapeError(f"features must be 2-D, got shape {features.shape}")
    num_nodes, feature_dim = features.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != num_nodes:
        raise ShapeError(
            f"label count {labels.shape[0]} != node count {num_nodes}"
        )
    for name, mask in (("train", train_mask), ("val", val_mask), ("test", test_mask)):
        if mask.shape[0] != num_nodes:
            raise ShapeError(f"{name} mask length {mask.shape[0]} != {num_nodes}")

    edge_pairs = np.asarray(edge_pairs, dtype=np.int64).reshape(-1, 2)
    if edge_pairs.size and (
        edge_pairs.min() < 0 or edge_pairs.max() >= num_nodes
    ):
        raise ValidationError("edge endpoint out of range")
    n_self = int(np.sum(edge_pairs[:, 0] == edge_pairs[:, 1])) if edge_pairs.size else 0
    if n_self:
        logger.info("dropped %d self-loop(s) at load", n_self)
    edges = canonical_edges(edge_pairs)
    num_edges = edges.shape[0]

    # both directions, then CSR via lexsort on (row, col)
    if num_edges:
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
    row_offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.add.at(row_offsets, rows + 1, 1)
    row_offsets = np.cumsum(row_offsets)

    if labels.size and labels.min() < SENTINEL_UNLABELED:
        raise ValidationError(
            f"label {labels.min()} out of range (must be >= {SENTINEL_UNLABELED})"
        )
    num_classes = int(labels.max()) + 1 if labels.size and labels.max() >= 0 else 0

    g = Graph(
        num_nodes=num_nodes,
        num_edges=num_edges,
        row_offsets=row_offsets,
        col_indices=cols,
        features=features,
        labels=labels,
        train_mask=np.asarray(train_mask, dtype=bool),
        val_mask=np.asarray(val_mask, dtype=bool),
        test_mask=np.asarray(test_mask, dtype=bool),
        num_classes=num_classes,
        feature_dim=feature_dim,
    )
    validate(g)
    return g


def validate(g: Graph) -> None:
    """Check every structural invariant; raise ValidationError on failure."""
    if g.row_offsets.shape[0] != g.num_nodes + 1:
        raise ValidationError("row_offsets length mismatch")
    if g.col_indices.shape[0] != 2 * g.num_edges:
        raise ValidationError("col_indices length != 2 * num_edges")
    if int(g.row_offsets[-1]) != g.col_indices.shape[0]:
        raise ValidationError("row_offsets inconsistent with col_indices")
    rows = np.repeat(np.arange(g.num_nodes, dtype=np.int64), g.degrees)
    cols = g.col_indices
    if cols.size:
        if cols.min() < 0 or cols.max() >= g.num_nodes:
            raise ValidationError("col index out of range")
        if np.any(rows == cols):
            raise ValidationError("self-loop stored")
        same_row = rows[1:] == rows[:-1]
        if np.any(same_row & (np.diff(cols) <= 0)):
            raise ValidationError("row neighbors not strictly ascending")
        # symmetry: the multiset of (i, j) keys equals the (j, i) multiset
        fwd = np.sort(rows * g.num_nodes + cols)
        rev = np.sort(cols * g.num_nodes + rows)
        if not np.array_equal(fwd, rev):
            raise ValidationError("adjacency is not symmetric")
    overlap = (
        (g.train_mask & g.val_mask)
        | (g.train_mask & g.test_mask)
        | (g.val_mask & g.test_mask)
    )
    if overlap.any():
        raise ValidationError("split masks are not pairwise disjoint")
    if np.any(g.labels[g.train_mask] < 0):
        raise ValidationError("train-masked node without a valid label")
    if g.labels.size and g.labels.max() >= g.num_classes and g.num_classes > 0:
        raise ValidationError("label out of range")


def neighbors(g: Graph, v: int) -> np.ndarray:
    """Ascending, duplicate-free neighbor ids of v; O(deg(v))."""
    if not 0 <= v < g.num_nodes:
        raise IndexError(f"node {v} out of range [0, {g.num_nodes})")
    return g.col_indices[g.row_offsets[v] : g.row_offsets[v + 1]]


def induced_subgraph(g: Graph, nodes, root: int | None = None) -> Subgraph:
    """Subgraph on ``nodes`` with exactly the edges of g inside the set.

    Local ids are assigned in ascending global-id order.
    """
    node_arr = np.unique(np.asarray(list(nodes), dtype=np.int64))
    if node_arr.size == 0:
        raise EmptyInputError("induced_subgraph: empty node set")
    if node_arr.min() < 0 or node_arr.max() >= g.num_nodes:
        raise PreconditionError("induced_subgraph: node id out of range")
    in_set = np.zeros(g.num_nodes, dtype=bool)
    in_set[node_arr] = True
    rows = np.repeat(np.arange(g.num_nodes, dtype=np.int64), g.degrees)
    keep = in_set[rows] & in_set[g.col_indices] & (rows < g.col_indices)
    # CSR order is already lexicographic in (row, col)
    edges = np.stack([rows[keep], g.col_indices[keep]], axis=1)
    if root is None:
        root = int(node_arr[0])
    elif root not in set(node_arr.tolist()):
        raise PreconditionError("root must belong to the node set")
    return Subgraph(nodes=node_arr, edges=edges, root=int(root))


def row_normalize_features(X: np.ndarray) -> np.ndarray:
    """Divide each row by its sum; all-zero rows stay zero."""
    X = np.asarray(X, dtype=np.float32)
    sums = X.sum(axis=1, keepdims=True)
    out = np.divide(X, sums, out=np.zeros_like(X), where=sums != 0)
    return out


# ---------------------------------------------------------------------------
# text format loading


def _parse_edge_file(path: Path) -> np.ndarray:
    pairs = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 2:
                raise ParseError(path, line_no, f"expected 'u v', got {text!r}")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise ParseError(path, line_no, f"non-integer id in {text!r}")
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def _parse_label_file(path: Path) -> np.ndarray:
    labels = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                labels.append(int(text))
            except ValueError:
                raise ParseError(path, line_no, f"non-integer label {text!r}")
    return np.asarray(labels, dtype=np.int64)


def _parse_split_file(path: Path, num_nodes: int):
    train = np.zeros(num_nodes, dtype=bool)
    val = np.zeros(num_nodes, dtype=bool)
    test = np.zeros(num_nodes, dtype=bool)
    idx = 0
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            token = line.strip()
            if not token:
                continue
            if token not in SPLIT_TOKENS:
                raise ParseError(path, line_no, f"unknown split token {token!r}")
            if idx >= num_nodes:
                raise ParseError(path, line_no, "more split tokens than nodes")
            if token == "train":
                train[idx] = True
            elif token == "val":
                val[idx] = True
            elif token == "test":
                test[idx] = True
            idx += 1
    if idx != num_nodes:
        raise ShapeError(f"split file has {idx} tokens for {num_nodes} nodes")
    return train, val, test


def _read_features_csv(path: Path) -> np.ndarray:
    try:
        frame = pd.read_csv(path, header=None, dtype=np.float32)
    except Exception as exc:  # pandas raises several parser error types
        raise ParseError(path, getattr(exc, "lineno", 0), str(exc))
    return frame.to_numpy(dtype=np.float32)


def load_graph(
    edge_file,
    feature_file,
    label_file,
    split_file,
    row_normalize: bool = False,
    name: str = "",
) -> DatasetBundle:
    """Load and validate a graph from the four native text files."""
    for path in (edge_file, feature_file, label_file, split_file):
        if not Path(path).exists():
            raise ValidationError(f"dataset file not found: {path}")
    features = _read_features_csv(Path(feature_file))
    num_nodes = features.shape[0]
    labels = _parse_label_file(Path(label_file))
    if labels.shape[0] != num_nodes:
        raise ShapeError(
            f"label count {labels.shape[0]} != feature row count {num_nodes}"
        )
    train, val, test = _parse_split_file(Path(split_file), num_nodes)
    pairs = _parse_edge_file(Path(edge_file))
    if row_normalize:
        features = row_normalize_features(features)
    g = build_graph(pairs, features, labels, train, val, test)
    prov = f"text:{Path(edge_file).parent}"
    return DatasetBundle(graph=g, name=name or Path(edge_file).parent.name, provenance=prov)


def load_dataset(directory, row_normalize: bool = False) -> DatasetBundle:
    """Load a dataset directory, preferring the binary cache when present."""
    d = Path(directory)
    if not d.is_dir():
        raise ValidationError(f"dataset directory not found: {d}")
    cache = d / "graph.mggr"
    if cache.exists():
        g = load_cache(cache)
        if row_normalize:
            g.features = row_normalize_features(g.features)
        return DatasetBundle(graph=g, name=d.name, provenance=f"cache:{cache}")
    return load_graph(
        d / "edges.txt",
        d / "features.csv",
        d / "labels.txt",
        d / "splits.txt",
        row_normalize=row_normalize,
        name=d.name,
    )


def save_dataset(bundle: DatasetBundle, directory, cache: bool = False) -> None:
    """Write the native text files (and optionally the binary cache)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    g = bundle.graph
    with open(d / "edges.txt", "w") as fh:
        fh.write(f"# {bundle.name}: {g.num_edges} undirected edges\n")
        for v in range(g.num_nodes):
            for u in neighbors(g, v):
                if v < u:
                    fh.write(f"{v} {u}\n")
    pd.DataFrame(g.features).to_csv(d / "features.csv", header=False, index=False)
    with open(d / "labels.txt", "w") as fh:
        fh.writelines(f"{int(x)}\n" for x in g.labels)
    with open(d / "splits.txt", "w") as fh:
        for i in range(g.num_nodes):
            if g.train_mask[i]:
                fh.write("train\n")
            elif g.val_mask[i]:
                fh.write("val\n")
            elif g.test_mask[i]:
                fh.write("test\n")
            else:
                fh.write("none\n")
    if cache:
        save_cache(g, d / "graph.mggr")


# ---------------------------------------------------------------------------
# binary cache: magic "MGGR", version u16, then little-endian arrays in
# Graph field order.


def save_cache(g: Graph, path) -> None:
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<H", CACHE_VERSION))
        fh.write(
            struct.pack(
                "<qqqq", g.num_nodes, g.num_edges, g.num_classes, g.feature_dim
            )
        )
        fh.write(g.row_offsets.astype("<i8").tobytes())
        fh.write(g.col_indices.astype("<i8").tobytes())
        fh.write(g.features.astype("<f4").tobytes())
        fh.write(g.labels.astype("<i8").tobytes())
        for mask in (g.train_mask, g.val_mask, g.test_mask):
            fh.write(mask.astype("u1").tobytes())


def load_cache(path) -> Graph:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CACHE_MAGIC:
            raise ValidationError(f"bad cache magic {magic!r} in {path}")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != CACHE_VERSION:
            raise ValidationError(f"unsupported cache version {version}")
        num_nodes, num_edges, num_classes, feature_dim = struct.unpack(
            "<qqqq", fh.read(32)
        )
        row_offsets = np.frombuffer(fh.read(8 * (num_nodes + 1)), dtype="<i8").copy()
        col_indices = np.frombuffer(fh.read(8 * 2 * num_edges), dtype="<i8").copy()
        features = (
            np.frombuffer(fh.read(4 * num_nodes * feature_dim), dtype="<f4")
            .reshape(num_nodes, feature_dim)
            .copy()
        )
        labels = np.frombuffer(fh.read(8 * num_nodes), dtype="<i8").copy()
        masks = []
        for _ in range(3):
            masks.append(np.frombuffer(fh.read(num_nodes), dtype="u1").astype(bool))
    g = Graph(
        num_nodes=num_nodes,
        num_edges=num_edges,
        row_offsets=row_offsets,
        col_indices=col_indices,
        features=features,
        labels=labels,
        train_mask=masks[0],
        val_mask=masks[1],
        test_mask=masks[2],
        num_classes=num_classes,
        feature_dim=feature_dim,
    )
    validate(g)
    return g
