"""Greedy multi-level convolution-matching coarsening."""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import InputError, check_fraction, check_positive_int, check_ratio
from .candidates import MergeGraph, candidate_pairs
from .costs import ConvCache, approx_costs, exact_cost, init_cache, merge_update
from .graph import Graph, MutableCoarseGraph, Partition, build_coarse

logger = logging.getLogger(__name__)

COST_MODES = ("exact", "approx")


class CandidateExhaustionWarning(UserWarning):
    pass


@dataclass
class CoarseState:
    graph: MutableCoarseGraph
    merge_graph: MergeGraph
    cache: ConvCache
    owner: np.ndarray
    members: list[list[int]] = field(repr=False)
    cost_mode: str = "approx"

    @classmethod
    def initial(cls, g, merge_graph: MergeGraph, cost_mode: str = "approx") -> "CoarseState":
        mg = MutableCoarseGraph.from_graph(g)
        return cls(
            graph=mg,
            merge_graph=merge_graph,
            cache=init_cache(mg),
            owner=np.arange(g.n),
            members=[[i] for i in range(g.n)],
            cost_mode=cost_mode,
        )

    @property
    def n_prime(self) -> int:
        return self.graph.n_live

    def partition(self) -> Partition:
        rank = np.cumsum(self.graph.live) - 1
        return Partition(rank[self.owner])

    def live_ids(self) -> np.ndarray:
        return np.flatnonzero(self.graph.live)


@dataclass
class Hierarchy:
    levels: list[Partition]
    stats: list[dict]
    status: str = "ok"
    regenerations: int = 0

    @property
    def final(self) -> Partition:
        return self.levels[-1]

    def __len__(self) -> int:
        return len(self.levels)


def top_k_non_overlap(mg: MergeGraph, k: int) -> list[tuple[int, int]]:
    """Greedily accept the lowest-cost current pairs whose endpoints are unused."""
    k = check_positive_int(k, "k")
    accepted, used, seen = [], set(), []
    for entry in mg.iter_lowest():
        seen.append(entry)
        _, u, v, _, _ = entry
        if u in used or v in used:
            continue
        accepted.append((u, v))
        used.update((u, v))
        if len(accepted) == k:
            break
    mg.restore(seen)
    return accepted


def _compute_costs(state: CoarseState, pairs) -> np.ndarray:
    if not pairs:
        return np.empty(0)
    if state.cost_mode == "approx":
        arr = np.asarray(pairs, dtype=np.int64)
        return approx_costs(state.cache, state.graph, arr[:, 0], arr[:, 1])
    return np.array([exact_cost(state.cache, state.graph, u, v) for u, v in pairs])


def merge_pairs(state: CoarseState, pairs, fault=None) -> list[int]:
    """Apply a batch of non-overlapping merges; returns the new supernode ids."""
    seen = set()
    for u, v in pairs:
        if u in seen or v in seen:
            raise InputError(f"pair ({u}, {v}) overlaps another pair in the batch")
        seen.update((u, v))
    new = []
    mg = state.merge_graph
    for u, v in pairs:
        keep, gone, _ = merge_update(state.cache, state.graph, u, v, fault=fault)
        mg.contract(keep, gone)
        moved = state.members[gone]
        state.owner[moved] = keep
        state.members[keep].extend(moved)
        state.members[gone] = []
        new.append(keep)
    touched = set(new)
    for s in new:
        touched.update(state.graph.adj[s].keys())
    mg.invalidate(sorted(touched))
    return new


def refresh_set(state: CoarseState, new_supernodes) -> list[int]:
    out = set(new_supernodes)
    for s in new_supernodes:
        out.update(state.graph.adj[s].keys())
    return sorted(out)


def recompute_local_costs(state: CoarseState, new_supernodes) -> int:
    """Recompute costs of merge-graph pairs touching the new supernodes or their neighbors."""
    pairs = state.merge_graph.pairs_touching(refresh_set(state, new_supernodes))
    state.merge_graph.set_costs(pairs, _compute_costs(state, pairs))
    return len(pairs)


def _regenerate(state: CoarseState, config: dict) -> int:
    """Seed the merge-graph with fresh candidates from the current coarse embedding."""
    ids = state.live_ids()
    if ids.size < 2:
        return 0
    cg = state.graph.to_coarse()
    local = candidate_pairs(cg, config["sgc_k"], min(config["pca_dim"], cg.features.shape[1]),
                            config["knn"], config["global_frac"], config["seed"])
    pairs = sorted({(int(ids[a]), int(ids[b])) for a, b in local})
    state.merge_graph.add_pairs(pairs)
    state.merge_graph.set_costs(pairs, _compute_costs(state, pairs))
    return len(pairs)


def verify_state(state: CoarseState, g, atol: float = 1e-9):
    """Raise ``AssertionError`` if the incremental state drifted from a rebuild."""
    p = state.partition()
    ref = build_coarse(g, p, size_weighted=True)
    cur = state.graph.to_coarse()
    ref_cache = init_cache(ref)
    ids = state.live_ids()
    checks = {
        "adjacency": abs(ref.adjacency - cur.adjacency).max() if ref.adjacency.nnz else 0.0,
        "sizes": np.abs(ref.sizes - cur.sizes).max(),
        "features": np.abs(ref.features - cur.features).max(),
        "h": np.abs(ref_cache.h - state.cache.h[ids]).max(),
        "s": np.abs(ref_cache.s - state.cache.s[ids]).max(),
        "infl": np.abs(ref_cache.infl - state.cache.infl[ids]).max(),
    }
    bad = {k: float(v) for k, v in checks.items() if v > atol}
    if bad:
        raise AssertionError(f"incremental state diverged from rebuild: {bad}")
    return checks


def coarsen(
    g: Graph,
    ratio: float,
    batch_size: int = 10,
    sgc_k: int = 3,
    pca_dim: int = 15,
    knn: int = 1,
    global_frac: float = 0.01,
    cost: str = "approx",
    seed: int = 0,
    max_regenerations: int | None = None,
    debug_verify: bool = False,
) -> Hierarchy:
    """Merge lowest-cost candidate pairs level by level until ``n' <= ratio * n``.

    When the merge-graph runs dry before the target, candidates are
    regenerated from the current coarse graph, at most ``max_regenerations``
    times (``None`` means as long as regeneration yields pairs).
    """
    ratio = check_ratio(ratio)
    batch_size = check_positive_int(batch_size, "batch_size")
    if cost not in COST_MODES:
        raise InputError(f"cost must be one of {COST_MODES}, got {cost!r}")
    config = dict(sgc_k=check_positive_int(sgc_k, "sgc_k", 0),
                  pca_dim=check_positive_int(pca_dim, "pca_dim"),
                  knn=check_positive_int(knn, "knn"),
                  global_frac=check_fraction(global_frac, "global_frac"), seed=int(seed))
    n = g.n
    target = ratio * n
    levels = [Partition.identity(n)]
    stats = [dict(level=0, n_prime=n, total_weight=float(g.adjacency.sum()), merges=0, seconds=0.0)]
    hierarchy = Hierarchy(levels, stats)
    if n <= max(target, 1):
        return hierarchy

    start = time.perf_counter()
    mg = MergeGraph(n, candidate_pairs(g, **config))
    state = CoarseState.initial(g, mg, cost_mode=cost)
    pairs = mg.pairs()
    mg.set_costs(pairs, _compute_costs(state, pairs))
    stats[0]["seconds"] = time.perf_counter() - start
    logger.debug("initial merge-graph: %d pairs", len(pairs))

    while state.n_prime > target and state.n_prime > 1:
        tic = time.perf_counter()
        batch = top_k_non_overlap(mg, batch_size)
        if not batch:
            if max_regenerations is not None and hierarchy.regenerations >= max_regenerations:
                hierarchy.status = "exhausted"
                break
            added = _regenerate(state, config)
            hierarchy.regenerations += 1
            logger.debug("regenerated %d candidates at n'=%d", added, state.n_prime)
            if not added:
                hierarchy.status = "exhausted"
                break
            continue
        new = merge_pairs(state, batch)
        recompute_local_costs(state, new)
        if debug_verify:
            verify_state(state, g)
        part = state.partition()
        levels.append(part)
        stats.append(dict(level=len(levels) - 1, n_prime=part.n_prime,
                          total_weight=state.graph.total_weight(),
                          merges=len(batch), seconds=time.perf_counter() - tic))
    if hierarchy.status == "exhausted":
        warnings.warn(f"candidate pairs exhausted at n'={state.n_prime} (target {target:.1f})",
                      CandidateExhaustionWarning, stacklevel=2)
    return hierarchy


class ConvMatch(TransformerMixin, BaseEstimator):
    """Graph coarsener preserving one-layer GCN convolution outputs.

    ``fit`` builds the merge hierarchy; ``transform`` contracts a graph with
    the final partition (the fitted graph itself, or another graph over the
    same node set).

    Parameters
    ----------
    ratio : float
        Target fraction ``n'/n`` of supernodes.
    batch_size : int
        Non-overlapping pairs merged per level.
    sgc_k, pca_dim, knn, global_frac :
        Candidate generation settings: propagation depth, PCA dimension,
        neighbors per node, and globally nearest pairs as a fraction of ``n``.
    cost : {"approx", "exact"}
        Influence upper bound or exact cached cost.
    """

    def __init__(self, ratio=0.1, batch_size=10, sgc_k=3, pca_dim=15, knn=1, global_frac=0.01,
                 cost="approx", seed=0, max_regenerations=None, debug_verify=False):
        self.ratio = ratio
        self.batch_size = batch_size
        self.sgc_k = sgc_k
        self.pca_dim = pca_dim
        self.knn = knn
        self.global_frac = global_frac
        self.cost = cost
        self.seed = seed
        self.max_regenerations = max_regenerations
        self.debug_verify = debug_verify

    def fit(self, graph: Graph, y=None):
        if not isinstance(graph, Graph):
            raise InputError(f"ConvMatch.fit expects a Graph, got {type(graph).__name__}")
        tic = time.perf_counter()
        self.hierarchy_ = coarsen(graph, **self.get_params())
        self.fit_seconds_ = time.perf_counter() - tic
        self.partition_ = self.hierarchy_.final
        self.n_nodes_ = graph.n
        self.status_ = self.hierarchy_.status
        return self

    def transform(self, graph: Graph):
        check_is_fitted(self, "partition_")
        if graph.n != self.n_nodes_:
            raise InputError(f"graph has {graph.n} nodes, fitted on {self.n_nodes_}")
        return build_coarse(graph, self.partition_)
