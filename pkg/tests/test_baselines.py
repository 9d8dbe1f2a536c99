import math

import numpy as np
import pytest

from graphscore.baselines import (
    BaselineConfig,
    cosine_score,
    cosine_scores,
    manifold_score,
    shortest_path_distances,
)
from graphscore.graph import BlockAdjacency, NodePartition, build_adjacency
from graphscore.prompts import PrototypeSet
from graphscore.store import EmbeddingMatrix

from oracles import floyd_warshall, random_unit_rows


def _protos(rows, class_of=None):
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    class_of = np.arange(rows.shape[0]) if class_of is None else class_of
    return PrototypeSet(vectors=EmbeddingMatrix(rows), class_of=class_of,
                        clusters_per_class=1)


# cosine -----------------------------------------------------------------

def test_single_class_scores_one():
    protos = _protos([[1.0, 0.0]])
    for sample in ([1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]):
        assert cosine_score(sample, protos) == 1.0


def test_two_class_closed_form():
    protos = _protos([[1.0, 0.0], [0.0, 1.0]])
    got = cosine_score([1.0, 0.0], protos)
    expected = 1.0 / (1.0 + math.exp(-1.0))
    assert abs(got - expected) < 1e-9


def test_equidistant_sample_scores_one_over_c():
    protos = _protos([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    sample = np.ones(3) / np.sqrt(3.0)
    assert abs(cosine_score(sample, protos) - 1.0 / 3.0) < 1e-12


def test_rotation_invariance():
    rng = np.random.default_rng(0)
    protos_raw = random_unit_rows(rng, 3, 8)
    samples = random_unit_rows(rng, 20, 8)
    rotation, _ = np.linalg.qr(rng.standard_normal((8, 8)))
    base = cosine_scores(samples, _protos(protos_raw))
    rotated = cosine_scores(samples @ rotation.T, _protos(protos_raw @ rotation.T))
    np.testing.assert_allclose(base, rotated, atol=1e-9)


def test_multi_prototype_class_uses_best_match():
    # two prototypes for class 0, one exactly on the sample
    protos = _protos(
        [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]], class_of=[0, 0, 1])
    single = _protos([[1.0, 0.0], [-1.0, 0.0]], class_of=[0, 1])
    sample = [1.0, 0.0]
    assert abs(cosine_score(sample, protos) - cosine_score(sample, single)) < 1e-12


def test_softmax_bounds():
    rng = np.random.default_rng(4)
    protos = _protos(random_unit_rows(rng, 4, 6))
    scores = cosine_scores(random_unit_rows(rng, 50, 6), protos)
    assert (scores >= 1.0 / 4.0 - 1e-12).all() and (scores <= 1.0 + 1e-12).all()


def test_temperature_validation():
    with pytest.raises(ValueError):
        BaselineConfig(temperature=0.0)
    with pytest.raises(ValueError):
        BaselineConfig(epsilon=0.0)


# manifold ---------------------------------------------------------------

def _manual_adjacency(w_dense, dist_dense, n_proto, n_labeled=0):
    rows, cols = np.nonzero(w_dense)
    n = w_dense.shape[0]
    part = NodePartition(n_proto, n_labeled, n - n_proto - n_labeled)
    return BlockAdjacency(rows=rows, cols=cols, weights=w_dense[rows, cols],
                          dists=dist_dense[rows, cols], partition=part, k=1)


def test_zero_distance_hit_scores_reciprocal_epsilon():
    adj = build_adjacency(_protos([[1.0, 0.0]]), None,
                          EmbeddingMatrix([[1.0, 0.0]]), k=1)
    cfg = BaselineConfig(epsilon=1e-9)
    scores = manifold_score(adj, cfg)
    assert scores[0] == 1.0 / 1e-9


def test_unreachable_node_scores_zero():
    adj = build_adjacency(_protos([[1.0, 0.0]]), None,
                          EmbeddingMatrix([[-1.0, 0.0]]), k=1)
    assert manifold_score(adj)[0] == 0.0


def test_dijkstra_matches_floyd_warshall():
    for seed in range(8):
        rng = np.random.default_rng(seed)
        protos = _protos(random_unit_rows(rng, 2, 6))
        unlabeled = EmbeddingMatrix(random_unit_rows(rng, 22, 6))
        adj = build_adjacency(protos, None, unlabeled, k=4)
        dist = shortest_path_distances(adj, sources=range(2))
        dense = np.full((24, 24), np.inf)
        dense[adj.rows, adj.cols] = adj.dists
        all_pairs = floyd_warshall(dense)
        expected = np.minimum(all_pairs[0], all_pairs[1])
        finite = np.isfinite(expected)
        np.testing.assert_allclose(dist[finite], expected[finite], atol=1e-9)
        assert np.array_equal(np.isfinite(dist), finite)


def test_multi_source_equals_min_of_single_source():
    rng = np.random.default_rng(3)
    protos = _protos(random_unit_rows(rng, 3, 6))
    unlabeled = EmbeddingMatrix(random_unit_rows(rng, 15, 6))
    adj = build_adjacency(protos, None, unlabeled, k=3)
    multi = shortest_path_distances(adj, sources=range(3))
    singles = np.stack([shortest_path_distances(adj, sources=[s]) for s in range(3)])
    np.testing.assert_allclose(multi, singles.min(axis=0), atol=1e-12)


def test_distances_monotone_when_edge_lengthened():
    w = np.zeros((3, 3))
    w[0, 1] = w[1, 0] = 1.0
    w[1, 2] = w[2, 1] = 1.0
    w[0, 0] = 1.0
    dist = np.zeros((3, 3))
    dist[0, 1] = dist[1, 0] = 0.5
    dist[1, 2] = dist[2, 1] = 0.25
    adj = _manual_adjacency(w, dist, n_proto=1)
    base = shortest_path_distances(adj, sources=[0])
    longer = dist.copy()
    longer[1, 2] = longer[2, 1] = 0.75
    adj2 = _manual_adjacency(w, longer, n_proto=1)
    bumped = shortest_path_distances(adj2, sources=[0])
    assert (bumped >= base - 1e-12).all()
    np.testing.assert_allclose(base, [0.0, 0.5, 0.75], atol=1e-12)
    np.testing.assert_allclose(bumped, [0.0, 0.5, 1.25], atol=1e-12)


def test_manifold_seeds_from_labeled_nodes_too():
    # labeled node adjacent to an unlabeled node the prototype cannot reach
    w = np.zeros((3, 3))
    w[0, 0] = 1.0  # prototype self-loop only
    w[1, 1] = 1.0
    w[1, 2] = w[2, 1] = 0.9
    dist = np.zeros((3, 3))
    dist[1, 2] = dist[2, 1] = 0.125
    adj = _manual_adjacency(w, dist, n_proto=1, n_labeled=1)
    scores = manifold_score(adj, BaselineConfig(epsilon=1e-9))
    assert scores[0] == pytest.approx(1.0 / (0.125 + 1e-9))
