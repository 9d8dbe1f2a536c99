import numpy as np
import pytest

from graphscore.graph import (
    DEGREE_FLOOR,
    BlockAdjacency,
    GraphConfig,
    NodePartition,
    build_adjacency,
    dump_graph,
    knn_exact,
    normalize,
)
from graphscore.prompts import PrototypeSet
from graphscore.store import EmbeddingMatrix

from oracles import brute_knn, dense_block_adjacency, random_unit_rows, spectral_norm


def _protos(rows):
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    return PrototypeSet(vectors=EmbeddingMatrix(rows),
                        class_of=np.arange(rows.shape[0]),
                        clusters_per_class=1)


def _units(seed, n, d):
    return EmbeddingMatrix(random_unit_rows(np.random.default_rng(seed), n, d))


# knn ------------------------------------------------------------------

def test_knn_trivial():
    queries = EmbeddingMatrix([[1.0, 0.0]])
    corpus = EmbeddingMatrix([[1.0, 0.0], [0.0, 1.0]])
    assert knn_exact(queries, corpus, k=1) == [(0, 0, 1.0)]


def test_knn_k_too_large_with_self_exclusion():
    m = _units(0, 4, 3)
    with pytest.raises(ValueError, match="k too large"):
        knn_exact(m, m, k=4, exclude_self=True)


def test_knn_dim_mismatch():
    with pytest.raises(ValueError, match="dim mismatch"):
        knn_exact(_units(0, 2, 3), _units(1, 2, 4), k=1)


def test_knn_matches_brute_force_oracle():
    corpus = _units(7, 50, 16)
    got = knn_exact(corpus, corpus, k=5, exclude_self=True)
    expected = [t for row in brute_knn(corpus.data, corpus.data, 5, True) for t in row]
    assert [(q, c) for q, c, _ in got] == [(q, c) for q, c, _ in expected]
    np.testing.assert_allclose([s for *_, s in got], [s for *_, s in expected],
                               rtol=0, atol=1e-12)


def test_knn_tie_breaks_to_lower_index():
    queries = EmbeddingMatrix([[1.0, 0.0]])
    corpus = EmbeddingMatrix([[0.0, 1.0], [1.0, 0.0], [1.0, 0.0]])
    got = knn_exact(queries, corpus, k=2)
    assert [c for _, c, _ in got] == [1, 2]


# adjacency ------------------------------------------------------------

def test_adjacency_single_pair():
    adj = build_adjacency(_protos([[1.0, 0.0]]), None,
                          EmbeddingMatrix([[1.0, 0.0]]), k=1)
    np.testing.assert_array_equal(adj.to_dense(), [[1.0, 1.0], [1.0, 0.0]])


def test_proto_labeled_block_zero():
    protos = _protos(random_unit_rows(np.random.default_rng(0), 3, 8))
    labeled = _units(1, 4, 8)
    unlabeled = _units(2, 12, 8)
    adj = build_adjacency(protos, labeled, unlabeled, k=3)
    dense = adj.to_dense()
    assert (dense[:3, 3:7] == 0).all()
    assert (dense[3:7, :3] == 0).all()
    np.testing.assert_array_equal(dense[:3, :3], np.eye(3))
    np.testing.assert_array_equal(dense[3:7, 3:7], np.eye(4))
    assert (np.diag(dense)[7:] == 0).all()


def test_adjacency_matches_dense_oracle():
    for seed in range(6):
        rng = np.random.default_rng(seed)
        protos = _protos(random_unit_rows(rng, 1 + seed % 3, 8))
        labeled = (EmbeddingMatrix(random_unit_rows(rng, 2, 8))
                   if seed % 2 else None)
        unlabeled = EmbeddingMatrix(random_unit_rows(rng, 30, 8))
        adj = build_adjacency(protos, labeled, unlabeled, k=4)
        lab = labeled.data if labeled is not None else np.zeros((0, 8))
        expected = dense_block_adjacency(protos.vectors.data, lab,
                                         unlabeled.data, k=4)
        np.testing.assert_allclose(adj.to_dense(), expected, rtol=0, atol=1e-12)


def test_adjacency_with_duplicate_rows_ties():
    # duplicate unlabeled rows force similarity ties; both implementations
    # must break them toward the lower index
    rows = random_unit_rows(np.random.default_rng(4), 6, 5)
    rows[3] = rows[1]
    rows[5] = rows[1]
    unlabeled = EmbeddingMatrix(rows)
    protos = _protos(random_unit_rows(np.random.default_rng(5), 2, 5))
    adj = build_adjacency(protos, None, unlabeled, k=2)
    expected = dense_block_adjacency(protos.vectors.data, np.zeros((0, 5)),
                                     unlabeled.data, k=2)
    np.testing.assert_allclose(adj.to_dense(), expected, rtol=0, atol=1e-12)


def test_adjacency_symmetric_as_stored():
    adj = build_adjacency(_protos(random_unit_rows(np.random.default_rng(0), 2, 6)),
                          None, _units(1, 20, 6), k=3)
    dense = adj.to_dense()
    np.testing.assert_array_equal(dense, dense.T)


def test_adjacency_clamps_k_with_warning():
    with pytest.warns(UserWarning, match="clamping"):
        adj = build_adjacency(_protos([[1.0, 0.0]]), None,
                              EmbeddingMatrix([[0.9, 0.1], [0.1, 0.9]]), k=10)
    assert adj.partition.n_unlabeled == 2


def test_adjacency_sparsity_bound():
    part_args = [(2, 3, 25), (1, 0, 40)]
    for seed, (n_p, n_l, n_u) in enumerate(part_args):
        rng = np.random.default_rng(seed)
        protos = _protos(random_unit_rows(rng, n_p, 8))
        labeled = EmbeddingMatrix(random_unit_rows(rng, n_l, 8)) if n_l else None
        unlabeled = EmbeddingMatrix(random_unit_rows(rng, n_u, 8))
        k = 4
        adj = build_adjacency(protos, labeled, unlabeled, k=k)
        assert adj.nnz <= 2 * k * (n_p + n_l + n_u) + n_p + n_l


def test_adjacency_permutation_equivariance():
    rng = np.random.default_rng(10)
    protos = _protos(random_unit_rows(rng, 2, 6))
    unlab_rows = random_unit_rows(rng, 15, 6)
    adj = build_adjacency(protos, None, EmbeddingMatrix(unlab_rows), k=3)
    perm = np.random.default_rng(1).permutation(15)
    adj_p = build_adjacency(protos, None, EmbeddingMatrix(unlab_rows[perm]), k=3)
    full = np.concatenate([np.arange(2), 2 + perm])
    np.testing.assert_allclose(adj_p.to_dense(),
                               adj.to_dense()[np.ix_(full, full)],
                               rtol=0, atol=1e-12)


def test_edge_distances_match_embeddings():
    rng = np.random.default_rng(3)
    protos = _protos(random_unit_rows(rng, 2, 6))
    unlabeled = EmbeddingMatrix(random_unit_rows(rng, 10, 6))
    adj = build_adjacency(protos, None, unlabeled, k=3)
    stacked = np.vstack([protos.vectors.data, unlabeled.data])
    for i, j, dist in zip(adj.rows, adj.cols, adj.dists):
        np.testing.assert_allclose(dist, np.linalg.norm(stacked[i] - stacked[j]),
                                   rtol=0, atol=1e-9)


# normalization ----------------------------------------------------------

def _manual_adjacency(w_dense, n_proto, n_labeled):
    n = w_dense.shape[0]
    rows, cols = np.nonzero(w_dense)
    part = NodePartition(n_proto, n_labeled, n - n_proto - n_labeled)
    return BlockAdjacency(rows=rows, cols=cols, weights=w_dense[rows, cols],
                          dists=np.zeros(rows.size), partition=part, k=1)


def test_normalize_hand_example():
    adj = _manual_adjacency(np.array([[1.0, 1.0], [1.0, 0.0]]), 1, 0)
    norm = normalize(adj)
    expected = np.array([[0.5, 1 / np.sqrt(2)], [1 / np.sqrt(2), 0.0]])
    np.testing.assert_allclose(norm.weights.toarray(), expected, atol=1e-12)
    np.testing.assert_array_equal(norm.degree, [2.0, 1.0])


def test_normalize_identity():
    adj = _manual_adjacency(np.eye(3), 2, 0)
    norm = normalize(adj)
    np.testing.assert_allclose(norm.weights.toarray(), np.eye(3), atol=1e-15)


def test_normalize_isolated_node_floored():
    # unlabeled node antipodal to the prototype: its only candidate edge has
    # negative similarity, so it stays isolated
    adj = build_adjacency(_protos([[1.0, 0.0]]), None,
                          EmbeddingMatrix([[-1.0, 0.0]]), k=1)
    norm = normalize(adj)
    assert norm.degree[1] == DEGREE_FLOOR
    assert norm.weights.toarray()[1].sum() == 0.0


def test_normalized_symmetry_exact():
    rng = np.random.default_rng(12)
    adj = build_adjacency(_protos(random_unit_rows(rng, 3, 8)), None,
                          _units(13, 30, 8), k=5)
    w = normalize(adj).weights
    diff = (w - w.T).tocoo()
    assert diff.nnz == 0 or np.abs(diff.data).max() == 0.0


def test_spectral_bound_on_random_graphs():
    for seed in range(8):
        rng = np.random.default_rng(seed)
        n_u = int(rng.integers(10, 60))
        protos = _protos(random_unit_rows(rng, int(rng.integers(1, 4)), 8))
        unlabeled = EmbeddingMatrix(random_unit_rows(rng, n_u, 8))
        norm = normalize(build_adjacency(protos, None, unlabeled, k=5))
        assert spectral_norm(norm.weights.toarray(), seed=seed) <= 1.0 + 1e-9


def test_graph_config_validation():
    with pytest.raises(ValueError):
        GraphConfig(k=0)
    with pytest.raises(ValueError):
        GraphConfig(weight_exponent=0.5)


def test_weight_exponent():
    protos = _protos([[1.0, 0.0]])
    unlabeled = EmbeddingMatrix([[np.cos(0.5), np.sin(0.5)]])
    adj = build_adjacency(protos, None, unlabeled, k=1, weight_exponent=2.0)
    expected = np.cos(0.5) ** 2
    np.testing.assert_allclose(adj.to_dense()[0, 1], expected, atol=1e-12)


def test_partition_validation():
    with pytest.raises(ValueError):
        NodePartition(0, 0, 5)
    with pytest.raises(ValueError):
        NodePartition(1, 0, 0)
    part = NodePartition(2, 3, 4)
    assert part.n_total == 9
    assert part.unlabeled_slice == slice(5, 9)


def test_dump_graph(tmp_path):
    adj = build_adjacency(_protos([[1.0, 0.0]]), None,
                          EmbeddingMatrix([[1.0, 0.0]]), k=1)
    dump_graph(adj, tmp_path)
    lines = (tmp_path / "edges.csv").read_text().strip().splitlines()
    assert lines[0] == "row,col,weight"
    assert len(lines) == 1 + adj.nnz
    import json

    header = json.loads((tmp_path / "graph.json").read_text())
    assert header["n_proto"] == 1 and header["n_unlabeled"] == 1
