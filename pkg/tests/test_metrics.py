import math

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path

from meguide.exceptions import (
    EmptyInputError,
    PreconditionError,
    UndefinedMetricError,
)
from meguide.metrics import (
    UNREACHABLE,
    EdgeSmoothnessCache,
    bfs_hops,
    connection_failure_distance,
    feature_smoothness_graph,
    feature_smoothness_pair,
    hop_distance,
    same_label_fraction,
    smoothness_separation_statistic,
    same_label_hop_profile,
)
from meguide.graph import neighbors
from meguide.synth import TwoClusterParams

from conftest import make_graph, random_graph


def scalar_lambda_f(g):
    """Independent pure-python evaluation of the graph smoothness."""
    total = 0.0
    d = g.feature_dim
    for v in range(g.num_nodes):
        summed = [0.0] * d
        for u in neighbors(g, v).tolist():
            for i in range(d):
                summed[i] += float(g.features[v, i]) - float(g.features[u, i])
        total += sum(s * s for s in summed)
    return total / (g.num_edges * d)


# ---------------------------------------------------------------------------
# feature smoothness


def test_lambda_f_identical_features():
    g = make_graph([(0, 1), (1, 2)], np.ones((3, 4)) * 0.7)
    assert feature_smoothness_graph(g) == 0.0


def test_lambda_f_two_node_hand_value():
    g = make_graph([(0, 1)], [[1.0], [0.0]])
    assert feature_smoothness_graph(g) == pytest.approx(2.0)
    assert scalar_lambda_f(g) == pytest.approx(2.0)


def test_lambda_f_matches_scalar_oracle():
    rng = np.random.default_rng(5)
    g = random_graph(rng, 25, p=0.15, d=3)
    assert feature_smoothness_graph(g) == pytest.approx(scalar_lambda_f(g), rel=1e-12)


def test_lambda_f_zero_edges_undefined():
    g = make_graph(np.zeros((0, 2)), np.zeros((3, 2)))
    with pytest.raises(UndefinedMetricError):
        feature_smoothness_graph(g)


def test_lambda_f_scales_quadratically():
    rng = np.random.default_rng(9)
    g = random_graph(rng, 20, p=0.2, d=3)
    base = feature_smoothness_graph(g)
    scaled = feature_smoothness_graph(g, X=3.0 * g.features.astype(np.float64))
    assert scaled == pytest.approx(9.0 * base, rel=1e-12)


def test_pair_identical_zero(triangle):
    g = make_graph([(0, 1)], [[0.5, 0.5], [0.5, 0.5]])
    assert feature_smoothness_pair(g, 0, 1) == 0.0


def test_pair_hand_value():
    g = make_graph([(0, 1)], [[1.0, 0.0], [0.0, 1.0]])
    assert feature_smoothness_pair(g, 0, 1) == pytest.approx(1.0)


def test_pair_binary_closed_form():
    d, k = 1433, 37
    x0 = np.zeros(d)
    x1 = np.zeros(d)
    x1[:k] = 1.0
    g = make_graph([(0, 1)], np.stack([x0, x1]))
    assert feature_smoothness_pair(g, 0, 1) == pytest.approx(k / d)


def test_pair_symmetric(citation):
    rng = np.random.default_rng(2)
    for _ in range(20):
        v = int(rng.integers(citation.num_nodes))
        nbrs = neighbors(citation, v)
        if nbrs.size == 0:
            continue
        u = int(nbrs[0])
        assert feature_smoothness_pair(citation, v, u) == feature_smoothness_pair(
            citation, u, v
        )


def test_pair_requires_adjacency(path3):
    with pytest.raises(PreconditionError):
        feature_smoothness_pair(path3, 0, 2)


def test_pair_scaling_quadratic():
    g1 = make_graph([(0, 1)], [[1.0, 2.0], [0.0, 1.0]])
    g2 = make_graph([(0, 1)], [[2.0, 4.0], [0.0, 2.0]])
    assert feature_smoothness_pair(g2, 0, 1) == pytest.approx(
        4.0 * feature_smoothness_pair(g1, 0, 1)
    )


def test_cache_matches_direct_op(citation):
    cache = EdgeSmoothnessCache(citation)
    rng = np.random.default_rng(0)
    for _ in range(30):
        v = int(rng.integers(citation.num_nodes))
        for u in neighbors(citation, v).tolist()[:3]:
            assert cache.pair(v, u) == feature_smoothness_pair(citation, v, u)


def test_cache_all_edges_count(citation):
    cache = EdgeSmoothnessCache(citation)
    assert len(cache.all_edges()) == citation.num_edges


def test_permutation_invariance():
    rng = np.random.default_rng(1)
    g = random_graph(rng, 30, p=0.15, d=3)
    g.labels[:] = rng.integers(0, 3, size=30)
    g.train_mask[:] = True
    perm = rng.permutation(30)
    edges = []
    for v in range(30):
        for u in neighbors(g, v).tolist():
            if v < u:
                edges.append((perm[v], perm[u]))
    feats = np.zeros_like(g.features)
    labels = np.zeros_like(g.labels)
    feats[perm] = g.features
    labels[perm] = g.labels
    g2 = make_graph(edges, feats, labels=labels)
    assert feature_smoothness_graph(g2) == pytest.approx(
        feature_smoothness_graph(g), rel=1e-12
    )
    ld1, _ = connection_failure_distance(g, np.arange(30))
    ld2, _ = connection_failure_distance(g2, np.arange(30))
    assert ld1 == ld2


# ---------------------------------------------------------------------------
# hop distances


def test_hop_distance_path(path3):
    assert hop_distance(path3, 0, {2}) == {2: 2}


def test_hop_distance_disconnected():
    g = make_graph([(0, 1), (2, 3)], np.zeros((4, 1)))
    out = hop_distance(g, 0, {1, 2, 3})
    assert out[1] == 1
    assert out[2] == UNREACHABLE
    assert out[3] == UNREACHABLE


def test_bfs_matches_floyd_warshall_oracle():
    rng = np.random.default_rng(4)
    g = random_graph(rng, 100, p=0.05)
    rows = np.repeat(np.arange(g.num_nodes), g.degrees)
    adj = sp.csr_matrix(
        (np.ones(rows.size), (rows, g.col_indices)), shape=(100, 100)
    )
    dist = shortest_path(adj, method="FW", unweighted=True)
    for src in range(100):
        ours = bfs_hops(g, src)
        expect = np.where(np.isinf(dist[src]), UNREACHABLE, dist[src]).astype(int)
        assert np.array_equal(ours, expect)


def test_hop_triangle_inequality():
    rng = np.random.default_rng(6)
    g = random_graph(rng, 60, p=0.07)
    d = np.stack([bfs_hops(g, s) for s in range(60)]).astype(float)
    d[d == UNREACHABLE] = np.inf
    for a in range(0, 60, 7):
        for b in range(0, 60, 5):
            for c in range(0, 60, 11):
                assert d[a, c] <= d[a, b] + d[b, c] + 1e-9


# ---------------------------------------------------------------------------
# connection failure distance


def test_cfd_single_node_pool(path3):
    val, used = connection_failure_distance(path3, [0])
    assert val == 0.0
    assert used == 1


def test_cfd_path4_hand_value(path4_same_label):
    # per-node max distances along the path: 3, 2, 2, 3 -> mean 2.5
    val, used = connection_failure_distance(path4_same_label, [0, 1, 2, 3])
    assert val == pytest.approx(2.5)
    assert used == 4


def test_cfd_unreachable_partner_counts_zero():
    # two same-label components: cross-component max falls back to the
    # in-component partner at distance 1
    g = make_graph([(0, 1), (2, 3)], np.zeros((4, 1)))
    val, _ = connection_failure_distance(g, [0, 1, 2, 3])
    assert val == pytest.approx(1.0)


def test_cfd_isolated_same_label_node_zero():
    # node 2 is isolated: all same-label partners unreachable -> 0
    g = make_graph([(0, 1)], np.zeros((3, 1)))
    val, _ = connection_failure_distance(g, [0, 1, 2])
    assert val == pytest.approx((1 + 1 + 0) / 3)


def test_cfd_empty_pool_error(path3):
    with pytest.raises(EmptyInputError):
        connection_failure_distance(path3, [])


def test_cfd_unlabeled_pool_error():
    g = make_graph([(0, 1)], np.zeros((2, 1)), labels=[0, -1],
                   train=[True, False])
    with pytest.raises(PreconditionError):
        connection_failure_distance(g, [0, 1])


def test_cfd_pool_cap_subsamples(citation):
    pool = np.flatnonzero(citation.labels >= 0)
    rng = np.random.default_rng(12)
    val1, used = connection_failure_distance(citation, pool, pool_cap=50, rng=rng)
    assert used == 50
    val2, _ = connection_failure_distance(
        citation, pool, pool_cap=50, rng=np.random.default_rng(12)
    )
    assert val1 == val2


def test_cfd_threaded_matches_serial(citation):
    pool = np.flatnonzero(citation.train_mask)
    serial, _ = connection_failure_distance(citation, pool)
    threaded, _ = connection_failure_distance(citation, pool, threads=4)
    assert serial == pytest.approx(threaded, abs=1e-9)


def test_report_modes_exact_vs_estimated(citation):
    from meguide.metrics import compute_metrics_report

    exact = compute_metrics_report(citation, pool="all-labeled",
                                   pool_cap=10_000)
    assert exact.lambda_d_mode == "exact"
    assert exact.num_sources_used == citation.num_nodes
    est = compute_metrics_report(citation, pool="train")
    assert est.lambda_d_mode == "estimated"
    assert est.num_sources_used == int(citation.train_mask.sum())
    assert exact.lambda_f == est.lambda_f


def test_cfd_bounded_by_component_diameter():
    rng = np.random.default_rng(13)
    g = random_graph(rng, 35, p=0.12)
    g.labels[:] = rng.integers(0, 2, size=35)
    dist = np.stack([bfs_hops(g, s) for s in range(35)])
    diameter = int(dist.max())  # all finite when connected; -1s only shrink it
    val, _ = connection_failure_distance(g, np.arange(35))
    assert val <= diameter


def test_cfd_per_source_monotone_in_pool():
    # growing the pool can only raise each existing source's maximum;
    # the mean itself may move either way as new sources join
    rng = np.random.default_rng(8)
    g = random_graph(rng, 40, p=0.12)
    g.labels[:] = 0

    def per_source_max(pool):
        out = {}
        pool = np.asarray(sorted(pool))
        for s in pool.tolist():
            mates = pool[pool != s]
            hops = bfs_hops(g, s)[mates]
            hops = np.where(hops == UNREACHABLE, 0, hops)
            out[s] = hops.max() if mates.size else 0
        return out

    small = [0, 5, 9]
    big = small + [12, 17, 23, 31]
    m_small = per_source_max(small)
    m_big = per_source_max(big)
    for s in small:
        assert m_big[s] >= m_small[s]


# ---------------------------------------------------------------------------
# distributional statistics


def test_separation_statistic_gap_zero_near_zero():
    stats = [
        smoothness_separation_statistic(TwoClusterParams(gap=0.0, seed=s))
        for s in range(20)
    ]
    se = np.std(stats) / math.sqrt(len(stats))
    assert abs(np.mean(stats)) < 3 * se + 1e-3


def test_separation_statistic_positive_and_monotone():
    vals = [
        smoothness_separation_statistic(TwoClusterParams(gap=gap, seed=3))
        for gap in (0.2, 0.5, 1.0)
    ]
    assert all(v > 0 for v in vals)
    assert vals[0] < vals[1] < vals[2]


def test_hop_profile_complete_graph_same_label():
    n = 6
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    g = make_graph(edges, np.zeros((n, 1)))
    table = same_label_hop_profile(g, range(n))
    assert set(table) == {1}
    same, total = table[1]
    assert same == total == n * (n - 1) // 2
    assert same_label_fraction(table) == 1.0


def test_hop_profile_citation_shape(citation, citation_metrics):
    _, lam_d = citation_metrics
    table = same_label_hop_profile(citation, np.flatnonzero(citation.train_mask))
    near = same_label_fraction(table, hop_max=2)
    far = same_label_fraction(table, hop_min=math.ceil(lam_d) + 1)
    assert near > 1.0 / citation.num_classes
    assert far < 1.0 / citation.num_classes
