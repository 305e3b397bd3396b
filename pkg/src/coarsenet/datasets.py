"""Dataset adapters, evaluation splits and a synthetic citation-graph generator."""

from __future__ import annotations

import gzip
import pickle
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ._validation import InputError
from .graph import TEST, TRAIN, UNLABELED, VALID, Graph
from .io import FormatError, load_graph

# class proportions of the Cora citation graph, used by the synthetic generator
_CORA_CLASS_SIZES = np.array([351, 217, 418, 818, 426, 298, 180])


def row_normalize(X: np.ndarray) -> np.ndarray:
    sums = np.abs(X).sum(axis=1, keepdims=True)
    sums[sums == 0] = 1.0
    return X / sums


def planetoid_splits(labels, seed=0, per_class=20, n_valid=500, n_test=1000) -> np.ndarray:
    """``per_class`` training nodes per class, then disjoint validation and test sets."""
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    splits = np.full(labels.shape[0], -1, dtype=np.int64)
    train = []
    for c in np.unique(labels[labels >= 0]):
        idx = np.flatnonzero(labels == c)
        train.extend(rng.choice(idx, min(per_class, idx.size), replace=False).tolist())
    splits[train] = TRAIN
    rest = rng.permutation(np.flatnonzero((splits < 0) & (labels >= 0)))
    splits[rest[:n_valid]] = VALID
    splits[rest[n_valid : n_valid + n_test]] = TEST
    return splits


def split_edges(g: Graph, valid_frac=0.05, test_frac=0.10, seed=0):
    """Hold out undirected edges for link prediction.

    Returns ``(train_graph, {"valid": (m, 2) array, "test": (m, 2) array})``.
    """
    rng = np.random.default_rng(seed)
    edges = g.edge_array()
    order = rng.permutation(edges.shape[0])
    n_valid = int(round(valid_frac * edges.shape[0]))
    n_test = int(round(test_frac * edges.shape[0]))
    held = {"valid": edges[order[:n_valid]], "test": edges[order[n_valid : n_valid + n_test]]}
    keep = edges[order[n_valid + n_test :]]
    w = np.asarray(g.adjacency[keep[:, 0], keep[:, 1]]).ravel()
    train = Graph.from_edges(g.n, keep[:, 0], keep[:, 1], g.features, weights=w,
                             labels=g.labels, splits=g.splits)
    return train, {k: np.sort(v[np.lexsort((v[:, 1], v[:, 0]))], axis=1) for k, v in held.items()}


def read_linqs(content, cites, normalize=True):
    """Read ``.content``/``.cites`` citation files (Cora, Citeseer).

    Citations naming ids absent from the content file are skipped.
    Returns ``(graph, document_ids, class_names)``.
    """
    ids, rows, classes = [], [], []
    with open(content, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tok = line.split()
            if not tok:
                continue
            if len(tok) < 3:
                raise FormatError(f"{content}:{lineno}: expected id, features and class")
            ids.append(tok[0])
            try:
                rows.append([float(t) for t in tok[1:-1]])
            except ValueError:
                raise FormatError(f"{content}:{lineno}: non-numeric feature") from None
            classes.append(tok[-1])
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise FormatError(f"{content}: rows have differing feature counts {sorted(width)}")
    index = {pid: i for i, pid in enumerate(ids)}
    names = sorted(set(classes))
    labels = np.array([names.index(c) for c in classes])
    src, dst = [], []
    with open(cites, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tok = line.split()
            if not tok:
                continue
            if len(tok) != 2:
                raise FormatError(f"{cites}:{lineno}: expected 2 fields")
            if tok[0] in index and tok[1] in index:
                src.append(index[tok[0]])
                dst.append(index[tok[1]])
    X = np.array(rows)
    if normalize:
        X = row_normalize(X)
    return Graph.from_edges(len(ids), src, dst, X, labels=labels), ids, names


def _planetoid_object(path):
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def read_planetoid(root, name, normalize=True):
    """Read the ``ind.<name>.*`` pickles with the standard public split."""
    root = Path(root)
    parts = {k: _planetoid_object(root / f"ind.{name}.{k}") for k in ("x", "y", "tx", "ty", "allx", "ally", "graph")}
    test_idx = np.loadtxt(root / f"ind.{name}.test.index", dtype=np.int64)
    test_sorted = np.sort(test_idx)
    tx, ty = parts["tx"], parts["ty"]
    if name == "citeseer":
        # some test ids are isolated and missing from tx/ty; pad them with zeros
        full = np.arange(test_sorted.min(), test_sorted.max() + 1)
        tx_ext = sp.lil_matrix((full.size, tx.shape[1]))
        tx_ext[test_sorted - test_sorted.min(), :] = tx
        ty_ext = np.zeros((full.size, ty.shape[1]))
        ty_ext[test_sorted - test_sorted.min(), :] = ty
        tx, ty = tx_ext, ty_ext
    X = sp.vstack((parts["allx"], tx)).tolil()
    X[test_idx, :] = X[test_sorted, :]
    Y = np.vstack((parts["ally"], ty))
    Y[test_idx, :] = Y[test_sorted, :]
    labels = np.where(Y.sum(axis=1) > 0, Y.argmax(axis=1), UNLABELED)
    n = X.shape[0]
    src, dst = [], []
    for u, nbrs in parts["graph"].items():
        for v in nbrs:
            if u < n and v < n:
                src.append(u)
                dst.append(v)
    splits = np.full(n, -1, dtype=np.int64)
    n_train = parts["y"].shape[0]
    splits[:n_train] = TRAIN
    splits[n_train : n_train + 500] = VALID
    splits[test_idx] = TEST
    X = X.toarray()
    if normalize:
        X = row_normalize(X)
    return Graph.from_edges(n, src, dst, X, labels=labels, splits=splits)


def _read_csv_gz(path, dtype):
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt") as fh:
        return np.loadtxt(fh, delimiter=",", dtype=dtype, ndmin=2)


def read_ogb_csv(root):
    """Read an OGB-exported directory (``raw/*.csv[.gz]`` plus optional ``split/``)."""
    root = Path(root)

    def find(stem):
        for suffix in (".csv.gz", ".csv"):
            hits = sorted(root.glob(f"**/{stem}{suffix}"))
            if hits:
                return hits[0]
        return None

    edge_path, feat_path = find("edge"), find("node-feat")
    if edge_path is None or feat_path is None:
        raise FormatError(f"{root}: expected edge and node-feat CSV files")
    edges = _read_csv_gz(edge_path, np.int64)
    X = _read_csv_gz(feat_path, np.float64)
    labels = splits = None
    label_path = find("node-label")
    if label_path is not None:
        labels = _read_csv_gz(label_path, np.float64)[:, 0]
        labels = np.where(np.isnan(labels), UNLABELED, labels).astype(np.int64)
    for code, stem in ((TRAIN, "train"), (VALID, "valid"), (TEST, "test")):
        path = find(stem)
        if path is not None:
            if splits is None:
                splits = np.full(X.shape[0], -1, dtype=np.int64)
            splits[_read_csv_gz(path, np.int64)[:, 0]] = code
    return Graph.from_edges(X.shape[0], edges[:, 0], edges[:, 1], X, labels=labels, splits=splits)


def find_dataset(name: str, data_dir) -> Graph | None:
    """Locate ``name`` under ``data_dir`` in native, Planetoid or LINQS layout."""
    if data_dir is None:
        return None
    base = Path(data_dir)
    for d in (base / name, base / name.lower(), base):
        if d != base and (d / "edges.tsv").exists() and (d / "features.cmx").exists():
            opt = {k: d / f"{k}.tsv" for k in ("labels", "splits") if (d / f"{k}.tsv").exists()}
            return load_graph(d / "edges.tsv", d / "features.cmx", **opt)[0]
        if (d / f"ind.{name.lower()}.x").exists():
            return read_planetoid(d, name.lower())
        if (d / f"{name.lower()}.content").exists():
            g, _, _ = read_linqs(d / f"{name.lower()}.content", d / f"{name.lower()}.cites")
            return Graph(g.adjacency, g.features, g.labels, planetoid_splits(g.labels, seed=0))
    return None


def make_citation_graph(
    n_nodes=2708,
    n_classes=7,
    n_features=1433,
    n_edges=5278,
    homophily=0.75,
    words_per_node=18,
    topic_words=60,
    topic_strength=0.2,
    closure=0.3,
    seed=0,
    per_class=20,
    n_valid=500,
    n_test=1000,
) -> Graph:
    """Synthetic homophilous citation graph with sparse bag-of-words features.

    Defaults mimic the size, class balance and density of Cora.  Every node
    gets at least one edge; degrees follow a heavy-tailed popularity weight,
    and a ``closure`` fraction of the remaining edges close a triangle.
    Features are row-normalized and a Planetoid-style split is attached.
    """
    if n_classes < 1 or n_nodes < 2 * n_classes:
        raise InputError("need at least two nodes per class")
    rng = np.random.default_rng(seed)
    props = _CORA_CLASS_SIZES / _CORA_CLASS_SIZES.sum() if n_classes == 7 else np.ones(n_classes) / n_classes
    labels = rng.permutation(np.repeat(np.arange(n_classes), np.maximum(1, np.round(props * n_nodes)).astype(int))[:n_nodes])
    if labels.size < n_nodes:
        labels = np.concatenate([labels, rng.integers(0, n_classes, n_nodes - labels.size)])
    popularity = rng.pareto(2.0, n_nodes) + 1.0
    by_class = [np.flatnonzero(labels == c) for c in range(n_classes)]
    class_p = [popularity[idx] / popularity[idx].sum() for idx in by_class]
    all_p = popularity / popularity.sum()

    def partner(u):
        if rng.random() < homophily:
            c = labels[u]
            return rng.choice(by_class[c], p=class_p[c])
        return rng.choice(n_nodes, p=all_p)

    edges = set()
    nbrs = [[] for _ in range(n_nodes)]

    def add(u, v):
        key = (min(u, v), max(u, v))
        if u != v and key not in edges:
            edges.add(key)
            nbrs[u].append(v)
            nbrs[v].append(u)

    for u in range(n_nodes):
        add(u, partner(u))
    while len(edges) < n_edges:
        u = rng.choice(n_nodes, p=all_p)
        if rng.random() < closure and nbrs[u]:
            w = nbrs[u][rng.integers(len(nbrs[u]))]
            add(u, nbrs[w][rng.integers(len(nbrs[w]))])
        else:
            add(u, partner(u))
    e = np.array(sorted(edges))

    background = rng.pareto(1.0, n_features) + 1.0
    background /= background.sum()
    X = np.zeros((n_nodes, n_features))
    topics = [rng.choice(n_features, min(topic_words, n_features), replace=False) for _ in range(n_classes)]
    for i in range(n_nodes):
        n_topic = rng.binomial(words_per_node, topic_strength)
        words = np.concatenate([
            rng.choice(topics[labels[i]], n_topic),
            rng.choice(n_features, words_per_node - n_topic, p=background),
        ])
        X[i, words] = 1.0
    g = Graph.from_edges(n_nodes, e[:, 0], e[:, 1], row_normalize(X), labels=labels)
    return Graph(g.adjacency, g.features, g.labels, planetoid_splits(labels, seed=seed, per_class=per_class,
                                                               n_valid=n_valid, n_test=n_test))
