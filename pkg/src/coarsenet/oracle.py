"""Randomized consistency checks of the cost engine against full recomputation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import InputError
from .candidates import MergeGraph
from .coarsener import CoarseState, merge_pairs, verify_state
from .costs import BRUTE_FORCE_MAX_NODES, approx_cost, brute_force_cost, exact_cost
from .graph import Graph


def random_graph(rng, n: int | None = None, d: int | None = None, max_nodes: int = 50,
                 max_dim: int = 8) -> Graph:
    """Small random weighted graph; features are sometimes integer-valued to force ties."""
    n = int(rng.integers(2, max_nodes + 1)) if n is None else n
    d = int(rng.integers(1, max_dim + 1)) if d is None else d
    p = rng.uniform(0.02, 0.4)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    src, dst = iu[keep], ju[keep]
    if rng.random() < 0.5:
        w = rng.integers(1, 4, src.size).astype(float)
    else:
        w = rng.uniform(0.1, 3.0, src.size)
    if rng.random() < 0.3:
        X = rng.integers(0, 3, (n, d)).astype(float)
    else:
        X = rng.normal(size=(n, d))
    return Graph.from_edges(n, src, dst, X, weights=w)


def random_state(g: Graph, rng, n_batches: int | None = None, max_batch: int = 4, fault=None):
    """Apply random non-overlapping merge batches to ``g``; returns (state, batches applied)."""
    state = CoarseState.initial(g, MergeGraph(g.n))
    n_batches = int(rng.integers(0, g.n // 3 + 1)) if n_batches is None else n_batches
    done = 0
    for _ in range(n_batches):
        live = state.live_ids()
        if live.size < 2:
            break
        size = int(rng.integers(1, min(max_batch, live.size // 2) + 1))
        chosen = rng.permutation(live)[: 2 * size].reshape(-1, 2)
        merge_pairs(state, [tuple(map(int, p)) for p in chosen], fault=fault)
        done += 1
    return state, done


def neighbors(state: CoarseState, u: int) -> set:
    return set(state.graph.adj[u].keys()) - {u}


@dataclass
class OracleReport:
    instances: int = 0
    pairs: int = 0
    tight_pairs: int = 0
    max_exact_error: float = 0.0
    min_bound_slack: float = np.inf
    max_tight_gap: float = 0.0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_pair(state: CoarseState, g: Graph, u: int, v: int, report: OracleReport,
               where: str = "", tol: float = 1e-9):
    rank = np.cumsum(state.graph.live) - 1
    exact = exact_cost(state.cache, state.graph, u, v)
    brute = brute_force_cost(g, (int(rank[u]), int(rank[v])), partition=state.partition())
    approx = approx_cost(state.cache, state.graph, u, v)
    report.pairs += 1
    report.max_exact_error = max(report.max_exact_error, abs(exact - brute))
    report.min_bound_slack = min(report.min_bound_slack, approx - exact)
    info = dict(where=where, pair=(int(u), int(v)), exact=exact, brute=brute, approx=approx)
    if abs(exact - brute) > tol:
        report.violations.append(dict(kind="exact!=brute", **info))
    if approx < exact - tol:
        report.violations.append(dict(kind="bound", **info))
    nu, nv = neighbors(state, u), neighbors(state, v)
    if v not in nu and not (nu & nv):
        report.tight_pairs += 1
        report.max_tight_gap = max(report.max_tight_gap, abs(approx - exact))
        if abs(approx - exact) > tol:
            report.violations.append(dict(kind="tightness", **info))


def run_oracle(n_graphs: int = 100, n_nodes: int | None = 50, seed: int = 0, pairs_per_graph: int = 5,
               fault=None, verify: bool = True, max_nodes: int = BRUTE_FORCE_MAX_NODES) -> OracleReport:
    """Random graphs, random merge histories, random live pairs.

    Checks cached exact cost against brute-force recomputation, the upper
    bound, and its tightness on non-adjacent pairs with disjoint neighborhoods.
    ``n_nodes=None`` draws sizes uniformly from ``[2, 50]``.
    """
    if n_nodes is not None and n_nodes > max_nodes:
        raise InputError(f"oracle refused: {n_nodes} nodes exceeds guard of {max_nodes}")
    rng = np.random.default_rng(seed)
    report = OracleReport()
    for t in range(n_graphs):
        g = random_graph(rng, n=n_nodes)
        state, _ = random_state(g, rng, fault=fault)
        report.instances += 1
        if verify:
            try:
                verify_state(state, g)
            except AssertionError as exc:
                report.violations.append(dict(kind="state", where=f"graph {t}", detail=str(exc)))
        live = state.live_ids()
        if live.size < 2:
            continue
        for _ in range(pairs_per_graph):
            u, v = sorted(rng.choice(live, 2, replace=False).tolist())
            check_pair(state, g, u, v, report, where=f"graph {t}")
    return report


def disjoint_edges_fixture() -> tuple[float, float]:
    """Two disjoint edges u-w and v-z, ``x_u = 1`` and all else zero; costs of merging u, v."""
    g = Graph.from_edges(4, [0, 1], [2, 3], np.array([[1.0], [0.0], [0.0], [0.0]]))
    state = CoarseState.initial(g, MergeGraph(4))
    return exact_cost(state.cache, state.graph, 0, 1), approx_cost(state.cache, state.graph, 0, 1)
