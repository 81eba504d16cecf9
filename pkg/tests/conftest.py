"""Shared fixtures: tiny hand-built graphs, the synthetic citation network,
and discovery of real converted datasets when the user has provided them."""

import os
from pathlib import Path

import numpy as np
import pytest

from meguide.graph import DatasetBundle, build_graph, load_dataset
from meguide.metrics import connection_failure_distance, feature_smoothness_graph
from meguide.synth import CitationParams, citation_bundle, path_bundle


def make_graph(edges, features, labels=None, train=None, val=None, test=None):
    features = np.asarray(features, dtype=np.float32)
    n = features.shape[0]
    if labels is None:
        labels = np.zeros(n, dtype=np.int64)
    if train is None:
        train = np.ones(n, dtype=bool)
    if val is None:
        val = np.zeros(n, dtype=bool)
    if test is None:
        test = np.zeros(n, dtype=bool)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return build_graph(edges, features, np.asarray(labels, dtype=np.int64),
                       np.asarray(train, bool), np.asarray(val, bool),
                       np.asarray(test, bool))


def random_graph(rng, n, p=0.08, d=4):
    """Erdos-Renyi test graph with gaussian features."""
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    feats = rng.standard_normal((n, d)).astype(np.float32)
    return make_graph(edges, feats)


@pytest.fixture
def path3():
    return path_bundle(3).graph


@pytest.fixture
def path4_same_label():
    # 4-node path, one label class, used for the hand-derived distance 2.5
    return make_graph([(0, 1), (1, 2), (2, 3)], np.zeros((4, 2)))


@pytest.fixture
def triangle():
    return make_graph([(0, 1), (0, 2), (1, 2)], np.eye(3))


@pytest.fixture(scope="session")
def citation():
    """The calibrated citation-style stand-in used across the suite."""
    return citation_bundle(CitationParams(seed=1)).graph


@pytest.fixture(scope="session")
def citation_metrics(citation):
    lam_f = feature_smoothness_graph(citation)
    lam_d, _ = connection_failure_distance(
        citation, np.flatnonzero(citation.train_mask)
    )
    return lam_f, lam_d


def _find_real_dataset(name: str):
    candidates = []
    root = os.environ.get("MEGUIDE_DATA_DIR")
    if root:
        candidates.append(Path(root) / name)
    candidates.append(Path(__file__).parent / "data" / name)
    for c in candidates:
        if (c / "edges.txt").exists() or (c / "graph.mggr").exists():
            return c
    return None


def real_dataset_or_skip(name: str) -> DatasetBundle:
    path = _find_real_dataset(name)
    if path is None:
        pytest.skip(
            f"real dataset {name!r} not available in this environment; "
            f"convert the raw planetoid files with "
            f"`meguide convert --raw <dir> --name {name} --out <dir>` and "
            f"point MEGUIDE_DATA_DIR at the parent directory"
        )
    return load_dataset(path)
