"""Shared fixtures and dense reference implementations used as test oracles."""

import numpy as np
import pytest
import scipy.sparse as sp

from coarsenet.graph import Graph
from coarsenet.oracle import random_graph


def dense_propagate(A, sizes, X):
    """``D^{-1/2} (A + diag(sizes)) D^{-1/2} X`` with dense matrices."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    At = A + np.diag(sizes)
    dinv = 1.0 / np.sqrt(At.sum(axis=1))
    return (dinv[:, None] * At * dinv[None, :]) @ X


def dense_coarse(A, X, assign):
    """``P^T A P`` and ``C^{-1} P^T X`` with an explicit dense partition matrix."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    n_prime = assign.max() + 1
    P = np.zeros((A.shape[0], n_prime))
    P[np.arange(A.shape[0]), assign] = 1.0
    C = P.sum(axis=0)
    return P.T @ A @ P, (P.T @ X) / C[:, None], C


def random_partition(rng, n):
    k = int(rng.integers(1, n + 1))
    labels = rng.integers(0, k, n)
    _, dense = np.unique(labels, return_inverse=True)
    return dense


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def path3():
    return Graph.from_edges(3, [0, 1], [1, 2], np.array([[1.0], [0.0], [0.0]]))


@pytest.fixture
def edge2():
    return Graph.from_edges(2, [0], [1], np.array([[1.0], [0.0]]))


@pytest.fixture
def small_graphs():
    rng = np.random.default_rng(7)
    return [random_graph(rng) for _ in range(40)]


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance(capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(label, ok, detail):
        line = f"{label}: {'PASS' if ok else 'FAIL'} ({detail})"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
