import gzip
import pickle

import numpy as np
import pytest
import scipy.sparse as sp

from coarsenet.datasets import (find_dataset, make_citation_graph, planetoid_splits, read_linqs,
                                read_ogb_csv, read_planetoid, row_normalize, split_edges)
from coarsenet.graph import TEST, TRAIN, VALID
from coarsenet.io import FormatError, save_graph


@pytest.fixture
def linqs_files(tmp_path):
    content = tmp_path / "toy.content"
    content.write_text("p10\t1\t0\t1\tA\np20\t0\t1\t0\tB\np30\t0\t0\t1\tA\n")
    cites = tmp_path / "toy.cites"
    cites.write_text("p10\tp20\np30\tp10\nghost\tp10\n")
    return content, cites


class TestLinqs:
    def test_reads_graph(self, linqs_files):
        g, ids, names = read_linqs(*linqs_files)
        assert ids == ["p10", "p20", "p30"] and names == ["A", "B"]
        np.testing.assert_array_equal(g.labels, [0, 1, 0])
        np.testing.assert_array_equal(g.adjacency.toarray(), [[0, 1, 1], [1, 0, 0], [1, 0, 0]])
        np.testing.assert_allclose(g.features.sum(axis=1), 1.0)

    def test_ragged_rows(self, tmp_path):
        (tmp_path / "c").write_text("a\t1\t0\tX\nb\t1\tY\n")
        (tmp_path / "e").write_text("")
        with pytest.raises(FormatError, match="differing"):
            read_linqs(tmp_path / "c", tmp_path / "e")


def write_planetoid(root, name, n_train=2, gap=False):
    """Tiny planetoid pickles; with ``gap`` one test index has no feature row."""
    rng = np.random.default_rng(0)
    d, c = 4, 2
    n_all = 4
    test_idx = np.array([5, 4]) if not gap else np.array([6, 4])
    n_test = 2
    allx = sp.csr_matrix(rng.integers(0, 2, (n_all, d)).astype(float))
    ally = np.eye(c)[[0, 1, 0, 1]]
    tx = sp.csr_matrix(rng.integers(0, 2, (n_test, d)).astype(float))
    ty = np.eye(c)[[1, 0]]
    graph = {0: [1, 4], 1: [0], 2: [3], 3: [2], 4: [0], 5: [] if not gap else [], 6: []}
    objs = dict(x=allx[:n_train], y=ally[:n_train], tx=tx, ty=ty, allx=allx, ally=ally, graph=graph)
    for k, v in objs.items():
        with open(root / f"ind.{name}.{k}", "wb") as fh:
            pickle.dump(v, fh)
    np.savetxt(root / f"ind.{name}.test.index", test_idx, fmt="%d")
    return allx, tx


class TestPlanetoid:
    def test_reorders_test_rows(self, tmp_path):
        allx, tx = write_planetoid(tmp_path, "toy")
        g = read_planetoid(tmp_path, "toy", normalize=False)
        assert g.n == 6
        # test.index lists 5 then 4, so the first tx row belongs to node 5
        np.testing.assert_array_equal(g.features[5], tx.toarray()[0])
        np.testing.assert_array_equal(g.features[4], tx.toarray()[1])
        assert g.labels[5] == 1 and g.labels[4] == 0
        assert g.splits[:2].tolist() == [TRAIN, TRAIN]
        assert g.splits[4] == TEST and g.splits[5] == TEST
        assert g.adjacency[0, 4] == 1 and g.adjacency[2, 3] == 1

    def test_citeseer_gap_is_padded(self, tmp_path):
        write_planetoid(tmp_path, "citeseer", gap=True)
        g = read_planetoid(tmp_path, "citeseer", normalize=False)
        assert g.n == 7
        assert not g.features[5].any() and g.labels[5] == -1


class TestOgb:
    def test_reads_gz_csv(self, tmp_path):
        raw = tmp_path / "raw"
        raw.mkdir()
        split = tmp_path / "split" / "random"
        split.mkdir(parents=True)
        with gzip.open(raw / "edge.csv.gz", "wt") as fh:
            fh.write("0,1\n1,2\n")
        with gzip.open(raw / "node-feat.csv.gz", "wt") as fh:
            fh.write("0.5,1.0\n0.0,2.0\n1.5,0.0\n")
        (raw / "node-label.csv").write_text("1\n0\n1\n")
        (split / "train.csv").write_text("0\n")
        (split / "valid.csv").write_text("1\n")
        (split / "test.csv").write_text("2\n")
        g = read_ogb_csv(tmp_path)
        np.testing.assert_array_equal(g.features, [[0.5, 1.0], [0.0, 2.0], [1.5, 0.0]])
        np.testing.assert_array_equal(g.labels, [1, 0, 1])
        np.testing.assert_array_equal(g.splits, [TRAIN, VALID, TEST])
        assert g.edge_array().tolist() == [[0, 1], [1, 2]]

    def test_missing_files(self, tmp_path):
        with pytest.raises(FormatError, match="node-feat"):
            read_ogb_csv(tmp_path)


class TestFindDataset:
    def test_layouts(self, tmp_path, linqs_files):
        assert find_dataset("cora", None) is None
        assert find_dataset("cora", tmp_path) is None
        g = read_linqs(*linqs_files)[0]
        save_graph(tmp_path / "cora", g)
        assert find_dataset("Cora", tmp_path).n == 3
        write_planetoid(tmp_path, "citeseer", gap=True)
        assert find_dataset("citeseer", tmp_path).n == 7


class TestSplits:
    def test_planetoid_splits_are_disjoint(self):
        labels = np.repeat(np.arange(4), 50)
        s = planetoid_splits(labels, seed=3, per_class=5, n_valid=30, n_test=60)
        assert [(s == k).sum() for k in (TRAIN, VALID, TEST)] == [20, 30, 60]
        for c in range(4):
            assert ((s == TRAIN) & (labels == c)).sum() == 5

    def test_split_edges(self):
        g = make_citation_graph(n_nodes=200, n_classes=4, n_features=30, n_edges=400, seed=1,
                                per_class=5, n_valid=20, n_test=40)
        train, held = split_edges(g, seed=2)
        assert held["valid"].shape == (20, 2) and held["test"].shape == (40, 2)
        key = lambda e: set(map(tuple, e.tolist()))
        tr = key(train.edge_array())
        assert not tr & key(held["valid"]) and not tr & key(held["test"])
        assert not key(held["valid"]) & key(held["test"])
        assert len(tr) + 60 == g.edge_array().shape[0]
        a, b = split_edges(g, seed=2), split_edges(g, seed=2)
        np.testing.assert_array_equal(a[1]["test"], b[1]["test"])


class TestGenerator:
    def test_default_scale_matches_citation_graph(self):
        g = make_citation_graph(seed=0)
        assert g.n == 2708 and g.features.shape[1] == 1433
        assert g.edge_array().shape[0] == 5278
        assert np.bincount(g.labels).tolist() == [351, 217, 418, 818, 426, 298, 180]
        assert np.all(g.degrees > 0)
        np.testing.assert_allclose(g.features.sum(axis=1), 1.0)
        assert [(g.splits == k).sum() for k in (TRAIN, VALID, TEST)] == [140, 500, 1000]

    def test_homophily(self):
        g = make_citation_graph(n_nodes=500, n_classes=5, n_features=100, n_edges=1000, seed=4,
                                per_class=5, n_valid=50, n_test=100)
        e = g.edge_array()
        assert (g.labels[e[:, 0]] == g.labels[e[:, 1]]).mean() > 0.6

    def test_deterministic(self):
        kw = dict(n_nodes=120, n_classes=3, n_features=20, n_edges=240, per_class=5, n_valid=10,
                  n_test=20)
        a, b = make_citation_graph(seed=5, **kw), make_citation_graph(seed=5, **kw)
        assert (a.adjacency != b.adjacency).nnz == 0
        np.testing.assert_array_equal(a.features, b.features)

    def test_too_few_nodes(self):
        from coarsenet import InputError
        with pytest.raises(InputError):
            make_citation_graph(n_nodes=3, n_classes=2)


def test_row_normalize_keeps_zero_rows():
    np.testing.assert_array_equal(row_normalize(np.array([[0.0, 0.0], [1.0, 3.0]])),
                                  [[0, 0], [0.25, 0.75]])
