import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coarsenet import InputError
from coarsenet.datasets import make_citation_graph, split_edges
from coarsenet.evaluation import (EvalReport, SgcModel, SoftmaxRegression, TrainConfig, infer_nc,
                                  propagate, sample_negative_pairs, train_eval_lp, train_lp,
                                  train_sgc_nc)
from coarsenet.graph import TEST, TRAIN, VALID, Graph, Partition, build_coarse


def identity_coarse(g):
    return build_coarse(g, Partition.identity(g.n))


def permute_graph(g, perm):
    """Relabel node ``i`` as ``perm[i]``."""
    inv = np.argsort(perm)
    A = g.adjacency.tocsr()[inv][:, inv]
    src, dst = A.nonzero()
    keep = src < dst
    return Graph.from_edges(g.n, src[keep], dst[keep], g.features[inv],
                            weights=np.asarray(A[src[keep], dst[keep]]).ravel(),
                            labels=g.labels[inv], splits=g.splits[inv])


@pytest.fixture(scope="module")
def small_citation():
    return make_citation_graph(n_nodes=300, n_classes=3, n_features=60, n_edges=600, seed=1,
                               per_class=15, n_valid=60, n_test=120)


class TestNodeClassification:
    def test_single_supernode_single_class(self):
        g = Graph.from_edges(3, [0, 1], [1, 2], np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]]),
                             labels=[0, 0, 0], splits=[TRAIN, TRAIN, TRAIN])
        cg = build_coarse(g, Partition(np.zeros(3, dtype=int)))
        model = train_sgc_nc(cg, K=2)
        assert np.all(np.argmax(model.embed(cg), axis=1) == 0)

    def test_two_opposite_isolated_nodes(self):
        X = np.eye(2)
        train = Graph.from_edges(2, [], [], X, labels=[0, 1], splits=[TRAIN, TRAIN])
        copy = Graph.from_edges(2, [], [], X, labels=[0, 1], splits=[TEST, TEST])
        report = infer_nc(copy, train_sgc_nc(identity_coarse(train), K=2))
        assert report.test == 1.0

    def test_loss_is_monotone(self, small_citation):
        model = train_sgc_nc(identity_coarse(small_citation), K=2)
        h = np.asarray(model.loss_history)
        assert len(h) == 101
        assert np.all(np.diff(h) <= 1e-6)

    def test_argmax_invariant_to_positive_scaling(self, small_citation):
        model = train_sgc_nc(identity_coarse(small_citation), K=2)
        pred = np.argmax(model.embed(small_citation), axis=1)
        for c in (1e-3, 0.5, 7.0):
            scaled = SgcModel(model.theta * c, model.K, model.config, bias=model.bias * c)
            np.testing.assert_array_equal(np.argmax(scaled.embed(small_citation), axis=1), pred)
            assert infer_nc(small_citation, scaled).test == infer_nc(small_citation, model).test

    def test_identity_partition_equals_direct_training(self, small_citation):
        g = small_citation
        model = train_sgc_nc(identity_coarse(g), K=2)
        Z = propagate(g, 2)
        rows = np.flatnonzero(g.splits == TRAIN)
        clf = SoftmaxRegression().fit(Z[rows], g.labels[rows], n_classes=int(g.labels.max()) + 1)
        np.testing.assert_array_equal(model.theta, clf.coef_)
        np.testing.assert_array_equal(np.argmax(model.embed(g), axis=1), clf.predict(Z))

    def test_permutation_invariance(self, small_citation):
        g = small_citation
        perm = np.random.default_rng(0).permutation(g.n)
        gp = permute_graph(g, perm)
        a = infer_nc(g, train_sgc_nc(identity_coarse(g), K=2))
        b = infer_nc(gp, train_sgc_nc(identity_coarse(gp), K=2))
        assert a.test == pytest.approx(b.test, abs=1e-12)
        assert a.valid == pytest.approx(b.valid, abs=1e-12)

    def test_coarse_training_transfers(self, small_citation):
        from coarsenet.coarsener import coarsen
        g = small_citation
        h = coarsen(g, 0.3, batch_size=5, pca_dim=5)
        report = infer_nc(g, train_sgc_nc(build_coarse(g, h.final), K=2), ratio=0.3)
        assert 0.0 <= report.test <= 1.0 and report.ratio == 0.3
        assert report.test > 1.0 / 3

    def test_no_train_labels(self, path3):
        with pytest.raises(InputError, match="train"):
            train_sgc_nc(identity_coarse(path3))

    def test_feature_mismatch(self):
        g = Graph.from_edges(2, [], [], np.eye(2), labels=[0, 1], splits=[TRAIN, VALID])
        model = train_sgc_nc(identity_coarse(g))
        other = Graph.from_edges(2, [], [], np.eye(3)[:2], labels=[0, 1], splits=[TEST, TEST])
        with pytest.raises(InputError, match="features"):
            infer_nc(other, model)

    def test_report_shape(self):
        d = EvalReport("nc", "accuracy", 0.5, np.float64(0.25), 0.1).to_dict()
        assert d == dict(task="nc", metric="accuracy", valid=0.5, test=0.25, ratio=0.1,
                         summarize_s=0.0, train_s=0.0)
        assert type(d["test"]) is float


class TestSoftmaxRegression:
    def test_separable(self):
        X = np.array([[0.0, 1.0], [1.0, 0.0], [0.1, 0.9], [0.9, 0.2]])
        y = np.array([0, 1, 0, 1])
        clf = SoftmaxRegression(epochs=50).fit(X, y)
        assert clf.score(X, y) == 1.0

    def test_zero_epochs_keeps_zero_weights(self):
        clf = SoftmaxRegression(epochs=0).fit(np.eye(3), [0, 1, 2])
        assert not clf.coef_.any() and clf.loss_history_ == [pytest.approx(np.log(3))]

    @pytest.mark.parametrize("y", [[0, -1], [0, 1, 2], []])
    def test_bad_targets(self, y):
        with pytest.raises(InputError):
            SoftmaxRegression().fit(np.eye(2) if y else np.zeros((0, 2)), y)


def two_cliques(m=6):
    src, dst = [], []
    for off in (0, m):
        for i in range(m):
            for j in range(i + 1, m):
                src.append(off + i)
                dst.append(off + j)
    X = np.zeros((2 * m, 2))
    X[:m, 0] = 1.0
    X[m:, 1] = 1.0
    return Graph.from_edges(2 * m, src, dst, X)


class TestLinkPrediction:
    def test_two_cliques(self):
        g = two_cliques(8)
        g_train, held = split_edges(g, 0.1, 0.2, seed=0)
        report = train_eval_lp(identity_coarse(g_train), g_train, held, K=1,
                               full_edges=g.edge_array())
        assert report.task == "lp" and report.metric == "auc"
        assert report.test >= 0.99 and report.valid >= 0.99

    def test_identity_partition_equals_direct(self):
        g = make_citation_graph(n_nodes=200, n_classes=3, n_features=40, n_edges=500, seed=2,
                                per_class=10, n_valid=40, n_test=80)
        g_train, held = split_edges(g, seed=1)
        a = train_eval_lp(identity_coarse(g_train), g_train, held)
        b = train_eval_lp(identity_coarse(g_train), g_train, held)
        assert (a.valid, a.test) == (b.valid, b.test)
        model = train_lp(identity_coarse(g_train))
        np.testing.assert_array_equal(model.embed(g_train), train_lp(identity_coarse(g_train)).embed(g_train))
        assert np.all(np.diff(model.loss_history) <= 1e-6)

    def test_no_edges(self):
        g = Graph.from_edges(3, [], [], np.eye(3))
        with pytest.raises(InputError, match="edges"):
            train_lp(identity_coarse(g))

    def test_merged_only_edges_count_as_none(self, edge2):
        cg = build_coarse(edge2, Partition(np.array([0, 0])))
        with pytest.raises(InputError):
            train_lp(cg)


class TestNegativeSampling:
    def test_avoids_forbidden_and_duplicates(self):
        rng = np.random.default_rng(0)
        forbidden = {0 * 10 + 1, 2 * 10 + 3}
        neg = sample_negative_pairs(10, 40, forbidden, rng)
        keys = neg[:, 0] * 10 + neg[:, 1]
        assert np.all(neg[:, 0] < neg[:, 1])
        assert len(set(keys.tolist())) == 40 and not forbidden & set(keys.tolist())

    def test_capacity(self):
        with pytest.raises(InputError):
            sample_negative_pairs(3, 3, {1}, np.random.default_rng(0))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_loss_history_monotone_property(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 4)) * rng.uniform(0.1, 20.0)
    y = rng.integers(0, 3, 30)
    clf = SoftmaxRegression(lr=float(rng.uniform(0.01, 2.0)), epochs=30).fit(X, y)
    assert np.all(np.diff(clf.loss_history_) <= 1e-6)


def test_train_config_defaults():
    c = TrainConfig()
    assert (c.lr, c.epochs, c.alpha) == (0.2, 100, 5e-6)
