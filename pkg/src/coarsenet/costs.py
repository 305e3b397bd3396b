"""Merge costs: cached exact evaluation, the influence-based upper bound, and oracles.

Notation used throughout: for a live supernode ``i`` with weighted degree
``d_i`` (diagonal included) and size ``C_i``, ``r_i = (d_i + C_i)^{-1/2}``.
The cache keeps

* ``s_i = sum_j a_ij r_j x_j`` over all neighbors, including ``i`` itself
  when the supernode has intra-cluster weight;
* ``infl_i = sum_{j != i} a_ij r_j``;
* ``h_i = C_i r_i^2 x_i + r_i s_i``, the one-layer coarse convolution row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._validation import InputError
from .graph import MutableCoarseGraph, Partition, build_coarse, normalized_propagate

BRUTE_FORCE_MAX_NODES = 2_000


@dataclass
class ConvCache:
    h: np.ndarray
    s: np.ndarray
    infl: np.ndarray

    def copy(self) -> "ConvCache":
        return ConvCache(self.h.copy(), self.s.copy(), self.infl.copy())


def _as_mutable(graph) -> MutableCoarseGraph:
    if isinstance(graph, MutableCoarseGraph):
        return graph
    return MutableCoarseGraph.from_graph(graph)


def init_cache(graph) -> ConvCache:
    """Compute ``h``, ``s`` and ``infl`` from scratch in one pass over the edges."""
    if isinstance(graph, MutableCoarseGraph):
        ids = np.flatnonzero(graph.live)
        A = graph.to_csr(ids)
        sizes, X = graph.sizes[ids], graph.features[ids]
        n = graph.n
    else:
        ids = None
        A, sizes, X = graph.adjacency, graph.sizes, graph.features
        n = graph.n
    deg = np.asarray(A.sum(axis=1)).ravel()
    r = 1.0 / np.sqrt(deg + sizes)
    s = A @ (r[:, None] * X)
    off = A - sp.diags(A.diagonal())
    infl = off @ r
    h = (sizes * r * r)[:, None] * X + r[:, None] * s
    if ids is None:
        return ConvCache(np.asarray(h), np.asarray(s), np.asarray(infl))
    full = ConvCache(np.zeros((n, X.shape[1])), np.zeros((n, X.shape[1])), np.zeros(n))
    full.h[ids], full.s[ids], full.infl[ids] = h, s, infl
    return full


def _check_pair(g: MutableCoarseGraph, u: int, v: int):
    if u == v:
        raise InputError(f"cannot merge supernode {u} with itself")
    for i in (u, v):
        if not (0 <= i < g.n) or not g.live[i]:
            raise InputError(f"supernode {i} is not live")


def _merged_row(cache: ConvCache, g: MutableCoarseGraph, u: int, v: int):
    """Closed-form features, normalizer, summation and output of the merged supernode."""
    cu, cv = g.sizes[u], g.sizes[v]
    ru, rv = g.norm(u), g.norm(v)
    auv = g.weight(u, v)
    cs = cu + cv
    rs = 1.0 / np.sqrt(g.degrees[u] + g.degrees[v] + cs)
    xu, xv = g.features[u], g.features[v]
    xs = (cu * xu + cv * xv) / cs
    diag_s = g.diag[u] + g.diag[v] + 2.0 * auv
    ss = (
        cache.s[u]
        + cache.s[v]
        - (g.diag[u] + auv) * ru * xu
        - (g.diag[v] + auv) * rv * xv
        + diag_s * rs * xs
    )
    hs = cs * rs * rs * xs + rs * ss
    return xs, rs, ss, hs, ru, rv, auv


def _neighbor_weights(g: MutableCoarseGraph, u: int, v: int):
    nu, nv = g.adj[u], g.adj[v]
    idx = sorted((nu.keys() | nv.keys()) - {u, v})
    a_u = np.array([nu.get(i, 0.0) for i in idx])
    a_v = np.array([nv.get(i, 0.0) for i in idx])
    return np.array(idx, dtype=np.int64), a_u, a_v


def exact_cost(cache: ConvCache, graph, u: int, v: int) -> float:
    """L1 change of the one-layer coarse convolution caused by merging ``u`` and ``v``.

    Only ``u``, ``v`` and their one-hop neighbors change; neighbor rows are
    obtained from the cached summations without visiting two-hop nodes.
    """
    g = _as_mutable(graph)
    _check_pair(g, u, v)
    xs, rs, _, hs, ru, rv, _ = _merged_row(cache, g, u, v)
    cost = np.abs(cache.h[u] - hs).sum() + np.abs(cache.h[v] - hs).sum()
    idx, a_u, a_v = _neighbor_weights(g, u, v)
    if idx.size:
        ri = g.norm(idx)[:, None]
        h_new = (
            (g.sizes[idx][:, None] * ri * ri) * g.features[idx]
            + ri * cache.s[idx]
            + ((a_u + a_v)[:, None] * ri * rs) * xs
            - (a_u[:, None] * ri * ru) * g.features[u]
            - (a_v[:, None] * ri * rv) * g.features[v]
        )
        cost += np.abs(h_new - cache.h[idx]).sum()
    return float(cost)


def approx_costs(cache: ConvCache, graph, us, vs) -> np.ndarray:
    """Vectorized influence upper bound on the exact cost for many pairs at once."""
    g = _as_mutable(graph)
    us = np.asarray(us, dtype=np.int64)
    vs = np.asarray(vs, dtype=np.int64)
    if us.size == 0:
        return np.empty(0)
    auv = np.array([g.adj[u].get(v, 0.0) for u, v in zip(us.tolist(), vs.tolist())])
    cu, cv = g.sizes[us], g.sizes[vs]
    ru, rv = g.norm(us), g.norm(vs)
    du, dv = g.diag[us], g.diag[vs]
    cs = cu + cv
    rs = 1.0 / np.sqrt(g.degrees[us] + g.degrees[vs] + cs)
    wu, wv = cu / cs, cv / cs
    # merged row as a combination of cached rows:  x_s = wu x_u + wv x_v and
    # h_s = rs (s_u + s_v) + gu x_u + gv x_v
    lift = cs * rs * rs + rs * rs * (du + dv + 2.0 * auv)
    gu = lift * wu - rs * (du + auv) * ru
    gv = lift * wv - rs * (dv + auv) * rv
    xu, xv = g.features[us], g.features[vs]
    hs = rs[:, None] * (cache.s[us] + cache.s[vs]) + gu[:, None] * xu + gv[:, None] * xv
    cost = np.abs(cache.h[us] - hs).sum(axis=1) + np.abs(cache.h[vs] - hs).sum(axis=1)
    # shift of r x seen by the neighbors of u and of v
    t_u = (rs * wu - ru)[:, None] * xu + (rs * wv)[:, None] * xv
    t_v = (rs * wu)[:, None] * xu + (rs * wv - rv)[:, None] * xv
    return cost + np.abs(t_u).sum(axis=1) * cache.infl[us] + np.abs(t_v).sum(axis=1) * cache.infl[vs]


def approx_cost(cache: ConvCache, graph, u: int, v: int) -> float:
    """Influence upper bound on :func:`exact_cost`, O(1) in neighborhood size."""
    g = _as_mutable(graph)
    _check_pair(g, u, v)
    return float(approx_costs(cache, g, [u], [v])[0])


def merge_update(cache: ConvCache, graph: MutableCoarseGraph, u: int, v: int, fault=None):
    """Merge ``u`` and ``v`` in ``graph`` and update ``cache`` incrementally.

    Returns the kept id, the removed id and the affected neighbor ids.
    ``fault`` exists for mutation testing of the oracle suite only.
    """
    g = graph
    _check_pair(g, u, v)
    xs, rs, ss, hs, ru, rv, auv = _merged_row(cache, g, u, v)
    infl_s = cache.infl[u] - auv * rv + cache.infl[v] - auv * ru
    idx, a_u, a_v = _neighbor_weights(g, u, v)
    if idx.size:
        xu, xv = g.features[u], g.features[v]
        if fault != "skip-s-update":
            cache.s[idx] += (
                ((a_u + a_v) * rs)[:, None] * xs
                - (a_u * ru)[:, None] * xu
                - (a_v * rv)[:, None] * xv
            )
        cache.infl[idx] += (a_u + a_v) * rs - a_u * ru - a_v * rv
    keep, gone = g.contract(u, v)
    cache.s[keep], cache.h[keep], cache.infl[keep] = ss, hs, infl_s
    cache.s[gone], cache.h[gone], cache.infl[gone] = 0.0, 0.0, 0.0
    if idx.size:
        ri = g.norm(idx)[:, None]
        cache.h[idx] = (g.sizes[idx][:, None] * ri * ri) * g.features[idx] + ri * cache.s[idx]
    return keep, gone, idx


def objective_value(g, p: Partition) -> float:
    """Total L1 gap between lifted coarse and original one-layer convolutions."""
    cg = build_coarse(g, p)
    coarse = normalized_propagate(cg.adjacency, cg.sizes, cg.features)
    full = normalized_propagate(g.adjacency, g.sizes, g.features)
    return float(np.abs(coarse[p.assign] - full).sum())


def brute_force_cost(graph, pair, partition: Partition | None = None, max_nodes=BRUTE_FORCE_MAX_NODES):
    """Reference merge cost by full recomputation before and after the merge.

    With ``partition`` given, ``graph`` is first coarsened by it and ``pair``
    names supernodes of that coarse graph.
    """
    if graph.n > max_nodes:
        raise InputError(f"brute force refused: {graph.n} nodes exceeds guard of {max_nodes}")
    cg = build_coarse(graph, partition) if partition is not None else graph
    u, v = pair
    if u == v or not (0 <= u < cg.n and 0 <= v < cg.n):
        raise InputError(f"invalid pair {pair!r}")
    before = normalized_propagate(cg.adjacency, cg.sizes, cg.features)
    labels = np.arange(cg.n)
    labels[max(u, v)] = min(u, v)
    merge = Partition.from_labels(labels)
    after_graph = build_coarse(cg, merge, size_weighted=True)
    after = normalized_propagate(after_graph.adjacency, after_graph.sizes, after_graph.features)
    return float(np.abs(after[merge.assign] - before).sum())
