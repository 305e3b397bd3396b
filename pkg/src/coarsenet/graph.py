"""Sparse graph containers, partitions and the normalized propagation operator.

Original graphs carry no self-loops; the ``+ I`` of the GCN operator is
supplied analytically through per-node sizes.  Coarse graphs keep
intra-supernode weight on the diagonal of their adjacency, which the
propagation treats as an ordinary self-neighbor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._validation import InputError, check_matrix

TRAIN, VALID, TEST = 0, 1, 2
SPLIT_NAMES = {"train": TRAIN, "valid": VALID, "test": TEST}
UNLABELED = -1


def _as_csr(adjacency) -> sp.csr_matrix:
    A = sp.csr_matrix(adjacency, dtype=np.float64)
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return A


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable weighted undirected graph with dense node features.

    ``labels`` holds class ids with ``-1`` for unlabeled nodes and ``splits``
    holds one of ``TRAIN``/``VALID``/``TEST`` (or ``-1``) per node.
    """

    adjacency: sp.csr_matrix
    features: np.ndarray
    labels: np.ndarray | None = None
    splits: np.ndarray | None = None
    degrees: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = _as_csr(self.adjacency)
        n = A.shape[0]
        if A.shape != (n, n):
            raise InputError(f"adjacency must be square, got {A.shape}")
        if A.nnz and A.data.min() <= 0:
            raise InputError("edge weights must be strictly positive")
        if A.diagonal().any():
            raise InputError("original graphs may not contain self-loops")
        if A.nnz and abs(A - A.T).max() > 1e-12 * A.data.max():
            raise InputError("adjacency must be symmetric")
        X = check_matrix(self.features, "features", n_rows=n)
        object.__setattr__(self, "adjacency", A)
        object.__setattr__(self, "features", X)
        for name in ("labels", "splits"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=np.int64)
                if arr.shape != (n,):
                    raise InputError(f"{name} must have one entry per node")
                object.__setattr__(self, name, arr)
        object.__setattr__(self, "degrees", np.asarray(A.sum(axis=1)).ravel())

    @classmethod
    def from_edges(cls, n, src, dst, features, weights=None, labels=None, splits=None):
        """Build a graph from a possibly directed, possibly duplicated edge list.

        Self-loops are dropped, duplicate entries keep their largest weight and
        the two directions of an edge are merged with ``max``.
        """
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if weights is None:
            weights = np.ones(src.shape[0])
        weights = np.asarray(weights, dtype=np.float64)
        if not (src.shape == dst.shape == weights.shape):
            raise InputError("src, dst and weights must have equal length")
        if src.size and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= n):
            raise InputError(f"edge endpoints must lie in [0, {n})")
        if weights.size and weights.min() <= 0:
            raise InputError("edge weights must be strictly positive")
        keep = src != dst
        rows = np.concatenate([src[keep], dst[keep]])
        cols = np.concatenate([dst[keep], src[keep]])
        w = np.concatenate([weights[keep], weights[keep]])
        # max-reduce duplicates: sort by (row, col, weight) and keep the last
        order = np.lexsort((w, cols, rows))
        rows, cols, w = rows[order], cols[order], w[order]
        if rows.size:
            last = np.ones(rows.size, dtype=bool)
            last[:-1] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            rows, cols, w = rows[last], cols[last], w[last]
        A = sp.csr_matrix((w, (rows, cols)), shape=(n, n))
        return cls(A, features, labels=labels, splits=splits)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def sizes(self) -> np.ndarray:
        return np.ones(self.n)

    @property
    def n_classes(self) -> int:
        if self.labels is None or not np.any(self.labels >= 0):
            return 0
        return int(self.labels.max()) + 1

    def edge_array(self) -> np.ndarray:
        """Unique undirected edges as an ``(m, 2)`` array with ``src < dst``."""
        coo = sp.triu(self.adjacency, k=1).tocoo()
        return np.column_stack([coo.row, coo.col]).astype(np.int64)


@dataclass(frozen=True, eq=False)
class Partition:
    """Assignment of every original node to a dense supernode id."""

    assign: np.ndarray
    n_prime: int = field(init=False)
    sizes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        assign = np.asarray(self.assign, dtype=np.int64)
        if assign.ndim != 1:
            raise InputError("assignment must be one-dimensional")
        if assign.size and assign.min() < 0:
            raise InputError("supernode ids must be nonnegative")
        n_prime = int(assign.max()) + 1 if assign.size else 0
        sizes = np.bincount(assign, minlength=n_prime)
        if np.any(sizes == 0):
            empty = int(np.flatnonzero(sizes == 0)[0])
            raise InputError(f"supernode {empty} has no members")
        object.__setattr__(self, "assign", assign)
        object.__setattr__(self, "n_prime", n_prime)
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def identity(cls, n: int) -> "Partition":
        return cls(np.arange(n))

    @classmethod
    def from_labels(cls, labels) -> "Partition":
        """Relabel arbitrary cluster labels to dense ids in order of first appearance."""
        labels = np.asarray(labels)
        _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
        rank = np.empty(first.size, dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(first.size)
        return cls(rank[inverse.ravel()])

    @property
    def n(self) -> int:
        return self.assign.shape[0]

    def matrix(self) -> sp.csr_matrix:
        """The sparse ``n x n'`` 0/1 partition matrix."""
        return sp.csr_matrix(
            (np.ones(self.n), (np.arange(self.n), self.assign)), shape=(self.n, self.n_prime)
        )

    def compose(self, coarser: "Partition") -> "Partition":
        """Map original nodes through ``self`` and then through ``coarser``."""
        if coarser.n != self.n_prime:
            raise InputError("partitions do not compose: size mismatch")
        return Partition(coarser.assign[self.assign])

    def members(self) -> list[np.ndarray]:
        order = np.argsort(self.assign, kind="stable")
        return np.split(order, np.cumsum(self.sizes)[:-1])


@dataclass(frozen=True, eq=False)
class CoarseGraph:
    """Immutable coarse graph; the adjacency may carry diagonal weight.

    ``labels`` is the majority class over labeled members, ``train_labels``
    the majority over members in the training split (``-1`` where absent).
    """

    adjacency: sp.csr_matrix
    sizes: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None
    train_labels: np.ndarray | None = None
    degrees: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = _as_csr(self.adjacency)
        n = A.shape[0]
        X = check_matrix(self.features, "features", n_rows=n)
        sizes = np.asarray(self.sizes, dtype=np.float64)
        if sizes.shape != (n,) or np.any(sizes < 1):
            raise InputError("sizes must hold one value >= 1 per supernode")
        object.__setattr__(self, "adjacency", A)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "degrees", np.asarray(A.sum(axis=1)).ravel())

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @classmethod
    def from_graph(cls, g: Graph) -> "CoarseGraph":
        train = _train_labels(g)
        return cls(g.adjacency, g.sizes, g.features, labels=g.labels, train_labels=train)


def _train_labels(g: Graph):
    if g.labels is None:
        return None
    if g.splits is None:
        return g.labels.copy()
    return np.where(g.splits == TRAIN, g.labels, UNLABELED)


def majority_labels(labels: np.ndarray, assign: np.ndarray, n_prime: int) -> np.ndarray:
    """Majority class per supernode, ties to the smallest id, ``-1`` if none labeled."""
    mask = labels >= 0
    out = np.full(n_prime, UNLABELED, dtype=np.int64)
    if not mask.any():
        return out
    n_classes = int(labels[mask].max()) + 1
    counts = sp.csr_matrix(
        (np.ones(mask.sum()), (assign[mask], labels[mask])), shape=(n_prime, n_classes)
    ).toarray()
    has = counts.sum(axis=1) > 0
    out[has] = counts[has].argmax(axis=1)
    return out


def build_coarse(g, p: Partition, size_weighted: bool = False) -> CoarseGraph:
    """Contract ``g`` by ``p``: ``A' = P^T A P``, ``X' = C^{-1} P^T X``.

    ``g`` may itself be a :class:`CoarseGraph`, in which case supernode sizes
    accumulate.  By default features are the plain mean over the members of
    each part; with ``size_weighted=True`` members are weighted by their own
    sizes so that features stay the mean over original nodes.
    """
    if p.n != g.n:
        raise InputError(f"partition covers {p.n} nodes but graph has {g.n}")
    P = p.matrix()
    # mirror the upper triangle so A' is symmetric to the last bit
    U = sp.triu(P.T @ g.adjacency @ P).tocsr()
    A = (U + sp.triu(U, k=1).T).tocsr()
    A.sort_indices()
    sizes = np.asarray(P.T @ g.sizes).ravel()
    if size_weighted:
        X = (P.T @ (g.sizes[:, None] * g.features)) / sizes[:, None]
    else:
        X = (P.T @ g.features) / p.sizes[:, None]
    labels = train = None
    if isinstance(g, Graph) and g.labels is not None:
        labels = majority_labels(g.labels, p.assign, p.n_prime)
        train = majority_labels(_train_labels(g), p.assign, p.n_prime)
    return CoarseGraph(A, sizes, np.asarray(X), labels=labels, train_labels=train)


def normalized_propagate(adjacency, sizes, X) -> np.ndarray:
    """One application of ``D~^{-1/2} (A + diag(sizes)) D~^{-1/2}`` to ``X``.

    ``D~`` is the weighted degree (row sums of ``adjacency``, diagonal
    included) plus ``sizes``.
    """
    A = sp.csr_matrix(adjacency)
    n = A.shape[0]
    if A.shape != (n, n):
        raise InputError(f"adjacency must be square, got {A.shape}")
    sizes = np.asarray(sizes, dtype=np.float64)
    if sizes.shape != (n,):
        raise InputError(f"sizes must have length {n}")
    if np.any(sizes < 1):
        raise InputError("sizes must be >= 1")
    X = np.asarray(X, dtype=np.float64)
    squeeze = X.ndim == 1
    if squeeze:
        X = X[:, None]
    if X.shape[0] != n:
        raise InputError(f"X has {X.shape[0]} rows, expected {n}")
    total = np.asarray(A.sum(axis=1)).ravel() + sizes
    r = 1.0 / np.sqrt(total)
    out = r[:, None] * (A @ (r[:, None] * X)) + (sizes * r * r)[:, None] * X
    return out[:, 0] if squeeze else out


def sgc_embed(g, K: int) -> np.ndarray:
    """``K`` successive propagations of the features of ``g`` (``K = 0`` returns ``X``)."""
    if K < 0:
        raise InputError("K must be >= 0")
    H = g.features
    for _ in range(K):
        H = normalized_propagate(g.adjacency, g.sizes, H)
    return H


class MutableCoarseGraph:
    """Dict-of-dicts coarse graph supporting in-place pair contraction.

    Supernode ids are the original node ids; the merged supernode keeps the
    smaller id of the pair and the larger one is marked dead.
    """

    def __init__(self, adjacency, sizes, features):
        A = sp.csr_matrix(adjacency, dtype=np.float64)
        n = A.shape[0]
        self.n = n
        self.diag = A.diagonal().astype(np.float64)
        self.adj: list[dict[int, float]] = [dict() for _ in range(n)]
        coo = A.tocoo()
        for i, j, w in zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()):
            if i != j:
                self.adj[i][j] = self.adj[i].get(j, 0.0) + w
        self.sizes = np.asarray(sizes, dtype=np.float64).copy()
        self.degrees = np.asarray(A.sum(axis=1)).ravel()
        self.features = np.array(features, dtype=np.float64)
        self.live = np.ones(n, dtype=bool)
        self._offdiag_total = float(A.sum() - self.diag.sum())

    @classmethod
    def from_graph(cls, g) -> "MutableCoarseGraph":
        return cls(g.adjacency, g.sizes, g.features)

    @property
    def n_live(self) -> int:
        return int(self.live.sum())

    def total_weight(self) -> float:
        return self._offdiag_total + float(self.diag.sum())

    def weight(self, u: int, v: int) -> float:
        return self.adj[u].get(v, 0.0)

    def norm(self, i) -> np.ndarray:
        """``(d_i + |C_i|)^{-1/2}``."""
        return 1.0 / np.sqrt(self.degrees[i] + self.sizes[i])

    def contract(self, u: int, v: int) -> tuple[int, int]:
        """Merge ``u`` and ``v`` in place; returns ``(kept, removed)`` ids."""
        keep, gone = (u, v) if u < v else (v, u)
        auv = self.adj[keep].pop(gone, 0.0)
        self.adj[gone].pop(keep, None)
        cu, cv = self.sizes[keep], self.sizes[gone]
        self.features[keep] = (cu * self.features[keep] + cv * self.features[gone]) / (cu + cv)
        self.sizes[keep] = cu + cv
        self.degrees[keep] += self.degrees[gone]
        self.diag[keep] += self.diag[gone] + 2.0 * auv
        self._offdiag_total -= 2.0 * auv
        kept_nbrs = self.adj[keep]
        for w, wt in self.adj[gone].items():
            row = self.adj[w]
            del row[gone]
            row[keep] = row.get(keep, 0.0) + wt
            kept_nbrs[w] = kept_nbrs.get(w, 0.0) + wt
        self.adj[gone] = {}
        self.live[gone] = False
        self.sizes[gone] = 0.0
        self.degrees[gone] = 0.0
        self.diag[gone] = 0.0
        return keep, gone

    def to_csr(self, ids: np.ndarray | None = None) -> sp.csr_matrix:
        """Adjacency restricted to ``ids`` (default: live supernodes, ascending)."""
        if ids is None:
            ids = np.flatnonzero(self.live)
        pos = np.full(self.n, -1, dtype=np.int64)
        pos[ids] = np.arange(ids.size)
        rows, cols, vals = [], [], []
        for k, i in enumerate(ids.tolist()):
            for j, w in self.adj[i].items():
                rows.append(k)
                cols.append(pos[j])
                vals.append(w)
        m = ids.size
        A = sp.csr_matrix((vals, (rows, cols)), shape=(m, m))
        return (A + sp.diags(self.diag[ids])).tocsr()

    def to_coarse(self) -> CoarseGraph:
        ids = np.flatnonzero(self.live)
        return CoarseGraph(self.to_csr(ids), self.sizes[ids], self.features[ids])
