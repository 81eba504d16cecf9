"""Convert raw Planetoid-layout citation benchmarks to the native format.

Expects the standard public layout for Cora/Citeseer/Pubmed:

    ind.<name>.x ind.<name>.tx ind.<name>.allx     pickled scipy sparse
    ind.<name>.y ind.<name>.ty ind.<name>.ally     pickled one-hot arrays
    ind.<name>.graph                               pickled {node: [nbrs]}
    ind.<name>.test.index                          text, one id per line

The split follows the usual convention: the labeled head of allx is the
train set, the following 500 nodes are validation, and test.index lists
the test nodes. Test ids with gaps (citeseer) are filled with zero
feature rows and an unlabeled sentinel.
"""

from __future__ import annotations

import pickle
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .exceptions import ConversionError
from .graph import DatasetBundle, build_graph, save_dataset

PARTS = ("x", "y", "tx", "ty", "allx", "ally", "graph")


def _read_pickle(path: Path):
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def load_planetoid(raw_dir, name: str) -> DatasetBundle:
    raw = Path(raw_dir)
    objs = {}
    for part in PARTS:
        path = raw / f"ind.{name}.{part}"
        if not path.exists():
            raise ConversionError(f"missing raw file: {path}")
        objs[part] = _read_pickle(path)
    index_path = raw / f"ind.{name}.test.index"
    if not index_path.exists():
        raise ConversionError(f"missing raw file: {index_path}")
    test_idx = np.asarray(
        [int(line) for line in index_path.read_text().split()], dtype=np.int64
    )

    allx = sp.csr_matrix(objs["allx"])
    tx = sp.csr_matrix(objs["tx"])
    ally = np.asarray(objs["ally"])
    ty = np.asarray(objs["ty"])
    n_known = allx.shape[0]

    # citeseer has gaps in test.index: pad the test block with zero rows
    lo, hi = int(test_idx.min()), int(test_idx.max())
    span = hi - lo + 1
    tx_full = sp.lil_matrix((span, tx.shape[1]), dtype=np.float32)
    tx_full[test_idx - lo] = tx
    ty_full = np.zeros((span, ty.shape[1]), dtype=ty.dtype)
    ty_full[test_idx - lo] = ty

    features = sp.vstack([allx, sp.csr_matrix(tx_full)]).toarray().astype(np.float32)
    onehot = np.vstack([ally, ty_full])
    num_nodes = n_known + span

    labels = np.full(num_nodes, -1, dtype=np.int64)
    labeled = onehot.sum(axis=1) > 0
    labels[labeled] = np.argmax(onehot[labeled], axis=1)

    n_train = np.asarray(objs["y"]).shape[0]
    train = np.zeros(num_nodes, dtype=bool)
    train[:n_train] = True
    val = np.zeros(num_nodes, dtype=bool)
    # the 500-node validation block always sits inside the allx region,
    # before any test.index id
    val[n_train : min(n_train + 500, n_known)] = True
    test = np.zeros(num_nodes, dtype=bool)
    test[test_idx] = True

    pairs = []
    for u, nbrs in objs["graph"].items():
        for v in nbrs:
            if 0 <= int(v) < num_nodes and 0 <= int(u) < num_nodes:
                pairs.append((int(u), int(v)))
    edges = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)

    g = build_graph(edges, features, labels, train, val, test)
    return DatasetBundle(graph=g, name=name, provenance=f"planetoid:{raw}")


def convert_planetoid(raw_dir, name: str, out_dir, cache: bool = False) -> DatasetBundle:
    bundle = load_planetoid(raw_dir, name)
    save_dataset(bundle, out_dir, cache=cache)
    return bundle
