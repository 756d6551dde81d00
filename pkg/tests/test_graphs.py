import numpy as np
import pytest

from alignrec.data import RawInteractions, split_dataset
from alignrec.errors import ConfigError, DataError
from alignrec.features import FeatureMatrix
from alignrec.graphs import (build_knn_similarity, build_norm_adjacency,
                             build_norm_interaction, load_graph, save_graph)
from alignrec.sparse import SparseMatrix

from oracles import dense_knn_reference, dense_norm_adjacency


def _ds_from_pairs(pairs, num_users, num_items):
    records = [(f"u{u:03d}", f"i{i:03d}", n) for n, (u, i) in enumerate(pairs)]
    # pad so every index exists
    users_seen = {u for u, _ in pairs}
    items_seen = {i for _, i in pairs}
    assert users_seen == set(range(num_users)) and items_seen == set(range(num_items))
    return split_dataset(RawInteractions(records), (1.0, 0.0, 0.0), seed=0)


class TestAdjacency:
    def test_single_edge(self):
        ds = _ds_from_pairs([(0, 0)], 1, 1)
        adj = build_norm_adjacency(ds)
        dense = adj.to_dense()
        assert dense[0, 1] == 1.0 and dense[1, 0] == 1.0
        assert adj.nnz == 2

    def test_closed_form_degrees(self):
        ds = _ds_from_pairs([(0, 0), (0, 1), (1, 0)], 2, 2)
        dense = build_norm_adjacency(ds).to_dense()
        # deg(u0)=2, deg(i0)=2 -> entry 1/sqrt(4)
        assert dense[0, 2] == pytest.approx(0.5, abs=1e-15)
        assert dense[0, 3] == pytest.approx(1 / np.sqrt(2), abs=1e-15)
        assert dense[1, 2] == pytest.approx(1 / np.sqrt(2), abs=1e-15)

    def test_symmetry_random(self, rng):
        pairs = _random_bipartite(rng, 20, 15)
        ds = _ds_from_pairs(pairs, 20, 15)
        dense = build_norm_adjacency(ds).to_dense()
        assert np.array_equal(dense, dense.T)

    def test_matches_dense_oracle(self, rng):
        for _ in range(5):
            pairs = _random_bipartite(rng, 20, 15)
            ds = _ds_from_pairs(pairs, 20, 15)
            got = build_norm_adjacency(ds).to_dense()
            want = dense_norm_adjacency(20, 15, ds.train)
            assert np.max(np.abs(got - want)) < 1e-12


def _random_bipartite(rng, num_users, num_items):
    pairs = set()
    for u in range(num_users):
        for i in rng.choice(num_items, size=3, replace=False):
            pairs.add((u, int(i)))
    for i in range(num_items):
        pairs.add((int(rng.integers(num_users)), i))
    return sorted(pairs)


class TestInteraction:
    def test_single_edge(self):
        ds = _ds_from_pairs([(0, 0)], 1, 1)
        inter = build_norm_interaction(ds)
        assert inter.to_dense()[0, 0] == 1.0

    def test_is_subblock_of_adjacency(self, rng):
        pairs = _random_bipartite(rng, 12, 9)
        ds = _ds_from_pairs(pairs, 12, 9)
        adj = build_norm_adjacency(ds).to_dense()
        inter = build_norm_interaction(ds).to_dense()
        assert np.array_equal(inter, adj[:12, 12:])


class TestKnnSimilarity:
    def test_identical_pair(self):
        feat = FeatureMatrix(np.array([[1.0, 0.0], [1.0, 0.0]]))
        sim = build_knn_similarity(feat, 1).to_dense()
        assert sim[0, 1] == pytest.approx(1.0, abs=1e-15)
        assert sim[1, 0] == pytest.approx(1.0, abs=1e-15)
        assert sim[0, 0] == 0.0

    def test_orthogonal_vectors_empty_graph(self):
        feat = FeatureMatrix(np.eye(3))
        sim = build_knn_similarity(feat, 1)
        assert sim.nnz == 0

    def test_matches_bruteforce_oracle(self, rng):
        for _ in range(5):
            feat = FeatureMatrix(rng.normal(size=(30, 8)))
            got = build_knn_similarity(feat, 5).to_dense()
            want = dense_knn_reference(feat.data, 5)
            assert np.max(np.abs(got - want)) < 1e-12

    def test_row_cardinality_and_zero_diagonal(self, rng):
        feat = FeatureMatrix(rng.normal(size=(25, 6)))
        sim = build_knn_similarity(feat, 4)
        assert np.all(sim.row_nnz() <= 4)
        assert np.all(np.diag(sim.to_dense()) == 0.0)

    def test_permutation_equivariance(self, rng):
        feat = rng.normal(size=(18, 5))
        perm = rng.permutation(18)
        s1 = build_knn_similarity(FeatureMatrix(feat), 3).to_dense()
        s2 = build_knn_similarity(FeatureMatrix(feat[perm]), 3).to_dense()
        assert np.max(np.abs(s2 - s1[np.ix_(perm, perm)])) < 1e-12

    def test_zero_norm_row_rejected(self):
        feat = FeatureMatrix(np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]))
        with pytest.raises(DataError, match="item 1"):
            build_knn_similarity(feat, 1)

    def test_k_prime_too_large(self, rng):
        feat = FeatureMatrix(rng.normal(size=(4, 3)))
        with pytest.raises(ConfigError):
            build_knn_similarity(feat, 4)


def test_bundle_cache_roundtrip(tmp_path, rng):
    from alignrec.graphs import build_graphs, bundle_cache_key, load_bundle, save_bundle
    pairs = _random_bipartite(rng, 8, 7)
    ds = _ds_from_pairs(pairs, 8, 7)
    feat = FeatureMatrix(rng.normal(size=(7, 4)))
    bundle = build_graphs(ds, feat, k_prime=3)
    key = bundle_cache_key(ds, feat, 3)
    save_bundle(tmp_path, bundle, key)
    cached = load_bundle(tmp_path, key)
    assert cached is not None
    for field in ("adj_norm", "inter_norm", "sim"):
        assert np.array_equal(getattr(cached, field).to_dense(),
                              getattr(bundle, field).to_dense())
    assert load_bundle(tmp_path, "different-key") is None


def test_graph_cache_roundtrip(tmp_path, rng):
    dense = rng.normal(size=(6, 9)) * (rng.random(size=(6, 9)) < 0.4)
    mat = SparseMatrix.from_scipy(dense)
    path = tmp_path / "g.agrf"
    save_graph(path, mat)
    loaded = load_graph(path)
    assert np.array_equal(loaded.to_dense(), mat.to_dense())
    path2 = tmp_path / "h.agrf"
    save_graph(path2, loaded)
    assert path.read_bytes() == path2.read_bytes()
