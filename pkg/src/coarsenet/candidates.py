"""Candidate supernode pairs from SGC embeddings, and the merge-graph holding them."""

from __future__ import annotations

import heapq
import math
from collections import defaultdict

import numpy as np
from scipy.spatial.distance import cdist

from ._validation import InputError, check_matrix, check_positive_int
from .graph import sgc_embed

EXACT_KNN_MAX_NODES = 20_000
ALL_PAIRS_MAX_NODES = 5_000
_CHUNK_ELEMENTS = 4_000_000


def _chunks(n: int, width: int):
    step = max(1, _CHUNK_ELEMENTS // max(width, 1))
    for start in range(0, n, step):
        yield start, min(n, start + step)


def _top_eigenvectors(cov, p, seed, max_iter, tol):
    """Leading ``p`` eigenpairs of a symmetric PSD matrix by orthogonal iteration.

    Converged leading vectors are locked and deflated out of the active block.
    """
    d = cov.shape[0]
    rng = np.random.default_rng(seed)
    block = min(d, p + 8)
    Q, _ = np.linalg.qr(rng.standard_normal((d, block)))
    vals = np.zeros(block)
    scale = max(float(np.trace(cov)), np.finfo(float).tiny)
    locked = 0
    for _ in range(max_iter):
        Z = cov @ Q[:, locked:]
        if locked:
            L = Q[:, :locked]
            Z -= L @ (L.T @ Z)
            Z -= L @ (L.T @ Z)
        active, _ = np.linalg.qr(Z)
        CA = cov @ active
        T = active.T @ CA
        w, S = np.linalg.eigh((T + T.T) / 2)
        S = S[:, np.argsort(w)[::-1]]
        active, CA = active @ S, CA @ S
        Q[:, locked:] = active
        vals[locked:] = np.sort(w)[::-1]
        resid = np.linalg.norm(CA - active * vals[locked:], axis=0)
        while locked < p and resid[0] <= tol * scale:
            locked += 1
            resid = resid[1:]
        if locked >= p:
            break
    return Q[:, :p], vals[:p]


def pca_reduce(H, p: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-10) -> np.ndarray:
    """Project mean-centered ``H`` onto its top ``p`` principal directions.

    Components whose variance is numerically zero are returned as zero
    columns.  Each direction is sign-normalized so its largest-magnitude
    loading is positive, which makes the output deterministic for a seed.
    """
    H = check_matrix(H, "H")
    if isinstance(p, bool) or int(p) != p or p < 1:
        raise InputError(f"PCA dimension must be >= 1, got {p}")
    p = int(p)
    n, d = H.shape
    centered = H - H.mean(axis=0)
    if p >= d:
        return centered
    cov = centered.T @ centered / max(n - 1, 1)
    if not np.any(cov):
        return np.zeros((n, p))
    vecs, vals = _top_eigenvectors(cov, p, seed, max_iter, tol)
    flip = np.sign(vecs[np.abs(vecs).argmax(axis=0), np.arange(p)])
    flip[flip == 0] = 1.0
    vecs = vecs * flip
    vecs[:, vals <= 1e-12 * max(vals.max(), np.finfo(float).tiny)] = 0.0
    return centered @ vecs


def _normalize(pairs) -> list[tuple[int, int]]:
    return sorted({(min(i, j), max(i, j)) for i, j in pairs if i != j})


def exact_match_pairs(H) -> list[tuple[int, int]]:
    """Chain rows with bitwise-identical content, in ascending id order."""
    H = np.ascontiguousarray(H, dtype=np.float64)
    if H.ndim == 1:
        H = H[:, None]
    groups = defaultdict(list)
    for i in range(H.shape[0]):
        groups[H[i].tobytes()].append(i)
    pairs = []
    for members in groups.values():
        pairs.extend(zip(members[:-1], members[1:]))
    return sorted(pairs)


def _smallest_k(D, k):
    """Column indices of the ``k`` smallest entries per row, ties to the lower index."""
    kth = np.partition(D, k - 1, axis=1)[:, k - 1]
    rows, cols = np.nonzero(D <= kth[:, None])
    order = np.lexsort((cols, D[rows, cols], rows))
    rows, cols = rows[order], cols[order]
    starts = np.searchsorted(rows, np.arange(D.shape[0]))
    rank = np.arange(rows.size) - starts[rows]
    return cols[rank < k].reshape(D.shape[0], k)


def _knn_exact(H, k, ids=None):
    """For each row of ``H[ids]``, the ``k`` nearest other rows of ``H[ids]`` (L1)."""
    if ids is None:
        ids = np.arange(H.shape[0])
    sub = H[ids]
    m = sub.shape[0]
    k = min(k, m - 1)
    out = np.empty((m, max(k, 0)), dtype=np.int64)
    if k <= 0:
        return ids, out
    for a, b in _chunks(m, m):
        D = cdist(sub[a:b], sub, metric="cityblock")
        D[np.arange(b - a), np.arange(a, b)] = np.inf
        out[a:b] = _smallest_k(D, k)
    return ids, ids[out]


def _lsh_buckets(H, k, seed, n_planes=8):
    rng = np.random.default_rng(seed)
    planes = rng.standard_normal((H.shape[1], n_planes))
    bits = (H @ planes > 0).astype(np.int64)
    codes = bits @ (1 << np.arange(n_planes))
    buckets = [np.flatnonzero(codes == c) for c in np.unique(codes)]
    big = [b for b in buckets if b.size > k]
    small = [b for b in buckets if b.size <= k]
    if small:
        big.append(np.sort(np.concatenate(small)))
    return big


def knn_neighbors(H, k: int, seed: int = 0, exact_max_nodes: int = EXACT_KNN_MAX_NODES):
    """``(node, neighbor)`` arrays for each node's ``k`` nearest rows under L1."""
    H = check_matrix(H, "H")
    n = H.shape[0]
    if n <= exact_max_nodes:
        blocks = [np.arange(n)]
    else:
        blocks = _lsh_buckets(H, k, seed)
    src, dst = [], []
    for ids in blocks:
        if ids.size <= k:
            # residual bucket too small to answer on its own: scan everything
            for i in ids.tolist():
                d = np.abs(H - H[i]).sum(axis=1)
                d[i] = np.inf
                nb = np.argsort(d, kind="stable")[: min(k, n - 1)]
                src.append(np.full(nb.size, i))
                dst.append(nb)
            continue
        rows, nbrs = _knn_exact(H, k, ids)
        src.append(np.repeat(rows, nbrs.shape[1]))
        dst.append(nbrs.ravel())
    if not src:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(src), np.concatenate(dst)


def knn_pairs(H, k1: int, seed: int = 0, exact_max_nodes: int = EXACT_KNN_MAX_NODES):
    """Deduplicated pairs joining every node to its ``k1`` nearest rows."""
    k1 = check_positive_int(k1, "k1")
    src, dst = knn_neighbors(H, k1, seed, exact_max_nodes)
    return _normalize(zip(src.tolist(), dst.tolist()))


def global_pair_count(d_nn: float, n: int) -> int:
    """Number of globally-nearest pairs implied by the fraction ``d_nn`` of ``n``."""
    return int(math.floor(d_nn * n + 0.5))


def global_nearest_pairs(
    H, k2: int, k1: int = 1, seed: int = 0, all_pairs_max_nodes: int = ALL_PAIRS_MAX_NODES
) -> list[tuple[int, int]]:
    """The ``k2`` unordered pairs with the smallest L1 distance.

    Ties are broken by lexicographic ``(i, j)``.  Above ``all_pairs_max_nodes``
    the pool is restricted to each node's ``2 * k1`` nearest neighbors.
    """
    if k2 < 0:
        raise InputError("k2 must be >= 0")
    H = check_matrix(H, "H")
    n = H.shape[0]
    if k2 == 0 or n < 2:
        return []
    if n <= all_pairs_max_nodes:
        best_d = np.empty(0)
        best_i = np.empty(0, dtype=np.int64)
        best_j = np.empty(0, dtype=np.int64)
        for a, b in _chunks(n, n):
            D = cdist(H[a:b], H, metric="cityblock")
            rows, cols = np.nonzero(np.arange(n)[None, :] > np.arange(a, b)[:, None])
            dist = D[rows, cols]
            if dist.size > k2:
                kth = np.partition(dist, k2 - 1)[k2 - 1]
                keep = dist <= kth
                rows, cols, dist = rows[keep], cols[keep], dist[keep]
            best_d = np.concatenate([best_d, dist])
            best_i = np.concatenate([best_i, rows + a])
            best_j = np.concatenate([best_j, cols])
            order = np.lexsort((best_j, best_i, best_d))[:k2]
            best_d, best_i, best_j = best_d[order], best_i[order], best_j[order]
        return sorted(zip(best_i.tolist(), best_j.tolist()))
    src, dst = knn_neighbors(H, 2 * k1, seed)
    pool = np.array(_normalize(zip(src.tolist(), dst.tolist())), dtype=np.int64).reshape(-1, 2)
    dist = np.abs(H[pool[:, 0]] - H[pool[:, 1]]).sum(axis=1)
    order = np.lexsort((pool[:, 1], pool[:, 0], dist))[:k2]
    return sorted(map(tuple, pool[order].tolist()))


def candidate_pairs(
    graph, sgc_k: int = 3, pca_dim: int = 15, knn: int = 1, global_frac: float = 0.01, seed: int = 0
) -> list[tuple[int, int]]:
    """Union of exact, per-node nearest and globally nearest embedding matches."""
    H = sgc_embed(graph, sgc_k)
    low = pca_reduce(H, pca_dim, seed=seed)
    pairs = set(exact_match_pairs(H))
    pairs.update(knn_pairs(low, knn, seed=seed))
    k2 = global_pair_count(global_frac, graph.n)
    pairs.update(global_nearest_pairs(low, k2, k1=knn, seed=seed))
    return sorted(pairs)


class MergeGraph:
    """Candidate-pair graph over supernode ids with lazily invalidated costs.

    Every supernode carries a version stamp; a stored cost is current only
    while both endpoint stamps match the ones recorded with it.
    """

    def __init__(self, n: int, pairs=()):
        self.n = n
        self.neighbors: list[set[int]] = [set() for _ in range(n)]
        self.version = np.zeros(n, dtype=np.int64)
        self._costs: dict[tuple[int, int], tuple[float, int, int]] = {}
        self._heap: list[tuple[float, int, int, int, int]] = []
        self.add_pairs(pairs)

    def add_pairs(self, pairs):
        for u, v in pairs:
            if u == v:
                raise InputError(f"self-pair ({u}, {u}) is not a valid candidate")
            self.neighbors[u].add(v)
            self.neighbors[v].add(u)

    def pairs(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.n) for v in sorted(self.neighbors[u]) if u < v]

    def __len__(self) -> int:
        return sum(len(s) for s in self.neighbors) // 2

    def pairs_touching(self, nodes) -> list[tuple[int, int]]:
        out = set()
        for a in nodes:
            for b in self.neighbors[a]:
                out.add((a, b) if a < b else (b, a))
        return sorted(out)

    def set_costs(self, pairs, costs):
        ver = self.version
        for (u, v), c in zip(pairs, costs):
            c = float(c)
            vu, vv = int(ver[u]), int(ver[v])
            self._costs[(u, v)] = (c, vu, vv)
            heapq.heappush(self._heap, (c, u, v, vu, vv))
        if len(self._heap) > 64 and len(self._heap) > 4 * max(len(self._costs), 1):
            self._compact()

    def cost(self, u: int, v: int) -> float | None:
        """Current cost of ``(u, v)``, or ``None`` if unset or stale."""
        key = (u, v) if u < v else (v, u)
        entry = self._costs.get(key)
        if entry is None or not self._current(key[0], key[1], entry[1], entry[2]):
            return None
        return entry[0]

    def _current(self, u, v, vu, vv) -> bool:
        return self.version[u] == vu and self.version[v] == vv and v in self.neighbors[u]

    def _compact(self):
        self._costs = {k: e for k, e in self._costs.items() if self._current(k[0], k[1], e[1], e[2])}
        self._heap = [(e[0], k[0], k[1], e[1], e[2]) for k, e in self._costs.items()]
        heapq.heapify(self._heap)

    def invalidate(self, nodes):
        for i in nodes:
            self.version[i] += 1

    def iter_lowest(self):
        """Pop current entries in ascending ``(cost, u, v)`` order.

        The caller receives ``(cost, u, v, vu, vv)`` tuples and must hand back
        the ones it wants retained via :meth:`restore`.
        """
        while self._heap:
            entry = heapq.heappop(self._heap)
            if self._current(entry[1], entry[2], entry[3], entry[4]):
                yield entry

    def restore(self, entries):
        for e in entries:
            heapq.heappush(self._heap, e)

    def has_current(self) -> bool:
        while self._heap:
            e = self._heap[0]
            if self._current(e[1], e[2], e[3], e[4]):
                return True
            heapq.heappop(self._heap)
        return False

    def contract(self, keep: int, gone: int):
        """Re-target pairs of ``gone`` to ``keep``; drops the self-pair."""
        nb_keep = self.neighbors[keep]
        nb_keep.discard(gone)
        for w in self.neighbors[gone]:
            if w == keep:
                continue
            self.neighbors[w].discard(gone)
            self.neighbors[w].add(keep)
            nb_keep.add(w)
        self.neighbors[gone] = set()
        self.version[gone] += 1


def build_merge_graph(
    graph, sgc_k: int = 3, pca_dim: int = 15, knn: int = 1, global_frac: float = 0.01, seed: int = 0
) -> MergeGraph:
    """Initial merge-graph over the nodes of ``graph``; costs are left unset."""
    pairs = candidate_pairs(graph, sgc_k, pca_dim, knn, global_frac, seed)
    return MergeGraph(graph.n, pairs)
