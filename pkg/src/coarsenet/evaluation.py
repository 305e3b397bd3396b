"""Linear SGC models for node classification and link prediction on coarse graphs.

Models are trained on a coarse graph and always scored on the original graph.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.metrics import roc_auc_score
from sklearn.utils.validation import check_is_fitted

from ._validation import InputError, check_matrix, check_positive_int
from .graph import TEST, VALID, CoarseGraph, Graph, normalized_propagate


def propagate(graph, K: int) -> np.ndarray:
    """``K`` applications of the normalized operator with the graph's own sizes."""
    Z = graph.features
    for _ in range(K):
        Z = normalized_propagate(graph.adjacency, graph.sizes, Z)
    return Z


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _descend(loss_grad, theta, lr, epochs, tol=1e-6, betas=(0.9, 0.999), eps=1e-8):
    """Full-batch Adam steps, each halved until the loss rises by at most ``tol``.

    Returns the final parameters and the loss after every epoch (index 0 is
    the initial loss), which is therefore non-increasing within ``tol``.
    """
    b1, b2 = betas
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    loss, grad = loss_grad(theta)
    history = [float(loss)]
    for t in range(1, epochs + 1):
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad * grad
        direction = (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        step = lr
        while True:
            cand = theta - step * direction
            cand_loss, cand_grad = loss_grad(cand)
            if cand_loss <= loss + tol or step < 1e-12:
                break
            step *= 0.5
        if cand_loss > loss + tol:
            break
        theta, loss, grad = cand, cand_loss, cand_grad
        history.append(float(loss))
    return theta, history


class SoftmaxRegression(ClassifierMixin, BaseEstimator):
    """Multinomial logistic regression trained from zero by full-batch Adam.

    Parameters
    ----------
    lr : float
        Step size; halved within an epoch when the loss would increase.
    epochs : int
    alpha : float
        L2 penalty on the weights (bias excluded).
    """

    def __init__(self, lr=0.2, epochs=100, alpha=5e-6):
        self.lr = lr
        self.epochs = epochs
        self.alpha = alpha

    def fit(self, X, y, n_classes=None):
        X = check_matrix(X, "X")
        y = np.asarray(y, dtype=np.int64)
        if y.shape != (X.shape[0],):
            raise InputError("y must have one entry per row of X")
        if y.size == 0:
            raise InputError("no training rows")
        if y.min() < 0:
            raise InputError("class ids must be nonnegative")
        self.classes_ = np.arange(max(int(y.max()) + 1, n_classes or 0))
        c = self.classes_.size
        Y = np.zeros((y.size, c))
        Y[np.arange(y.size), y] = 1.0
        Xb = np.hstack([X, np.ones((X.shape[0], 1))])
        mask = np.ones((Xb.shape[1], 1))
        mask[-1] = 0.0
        m = X.shape[0]

        def loss_grad(W):
            P = _softmax(Xb @ W)
            loss = -np.log(np.clip(P[Y > 0], 1e-300, None)).sum() / m
            loss += 0.5 * self.alpha * ((W * mask) ** 2).sum()
            return loss, Xb.T @ (P - Y) / m + self.alpha * W * mask

        W, self.loss_history_ = _descend(loss_grad, np.zeros((Xb.shape[1], c)), self.lr,
                                         check_positive_int(self.epochs, "epochs", 0))
        self.coef_, self.intercept_ = W[:-1], W[-1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_matrix(X, "X")
        if X.shape[1] != self.coef_.shape[0]:
            raise InputError(f"X has {X.shape[1]} features, model expects {self.coef_.shape[0]}")
        return X @ self.coef_ + self.intercept_

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


@dataclass
class TrainConfig:
    lr: float = 0.2
    epochs: int = 100
    alpha: float = 5e-6
    seed: int = 0
    embed_dim: int = 16
    lp_lr: float = 0.01
    lp_epochs: int = 200


@dataclass
class SgcModel:
    """Weights applied to ``K``-step propagated features, times a fixed ``scale``."""

    theta: np.ndarray
    K: int
    config: TrainConfig
    scale: float = 1.0
    bias: np.ndarray | None = None
    loss_history: list = field(default_factory=list, repr=False)

    def embed(self, graph) -> np.ndarray:
        Z = propagate(graph, self.K) * self.scale
        if Z.shape[1] != self.theta.shape[0]:
            raise InputError(f"graph has {Z.shape[1]} features, model expects {self.theta.shape[0]}")
        out = Z @ self.theta
        return out if self.bias is None else out + self.bias


@dataclass
class EvalReport:
    task: str
    metric: str
    valid: float
    test: float
    ratio: float = 1.0
    summarize_s: float = 0.0
    train_s: float = 0.0

    def to_dict(self) -> dict:
        return {k: (float(v) if isinstance(v, (float, np.floating)) else v)
                for k, v in asdict(self).items()}


def _scale(Z) -> float:
    """Reciprocal mean row norm, so step sizes do not depend on feature magnitude."""
    norms = np.linalg.norm(Z, axis=1)
    mean = norms[norms > 0].mean() if np.any(norms > 0) else 1.0
    return 1.0 / mean


def train_sgc_nc(cg: CoarseGraph, K: int = 2, config: TrainConfig | None = None) -> SgcModel:
    """Fit softmax regression on propagated coarse features of train-labeled supernodes."""
    config = config or TrainConfig()
    K = check_positive_int(K, "K", 0)
    y = cg.train_labels if cg.train_labels is not None else None
    if y is None or not np.any(y >= 0):
        raise InputError("coarse graph has no train-labeled supernodes")
    Z = propagate(cg, K)
    rows = np.flatnonzero(y >= 0)
    n_classes = int(max(y.max(), cg.labels.max() if cg.labels is not None else 0)) + 1
    clf = SoftmaxRegression(config.lr, config.epochs, config.alpha)
    clf.fit(Z[rows], y[rows], n_classes=n_classes)
    return SgcModel(clf.coef_, K, config, 1.0, clf.intercept_, clf.loss_history_)


def _accuracy(pred, labels, mask):
    mask = mask & (labels >= 0)
    return float((pred[mask] == labels[mask]).mean()) if mask.any() else float("nan")


def infer_nc(g: Graph, model: SgcModel, ratio: float = 1.0) -> EvalReport:
    """Accuracy of ``model`` on the valid and test splits of the original graph."""
    if g.labels is None or g.splits is None:
        raise InputError("graph needs labels and splits for evaluation")
    pred = np.argmax(model.embed(g), axis=1)
    return EvalReport("nc", "accuracy", _accuracy(pred, g.labels, g.splits == VALID),
                      _accuracy(pred, g.labels, g.splits == TEST), ratio)


def _pair_keys(pairs, n):
    pairs = np.sort(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), axis=1)
    return pairs[:, 0] * n + pairs[:, 1]


def sample_negative_pairs(n: int, count: int, forbidden, rng) -> np.ndarray:
    """Uniform distinct unordered pairs ``i < j`` avoiding ``forbidden`` keys, by rejection."""
    forbidden = set(forbidden.tolist()) if isinstance(forbidden, np.ndarray) else set(forbidden)
    capacity = n * (n - 1) // 2 - len(forbidden)
    if count > capacity:
        raise InputError(f"cannot draw {count} negative pairs; only {capacity} exist")
    out, seen = [], set()
    while len(out) < count:
        draw = rng.integers(0, n, size=(2 * (count - len(out)) + 8, 2))
        for a, b in draw.tolist():
            if a == b:
                continue
            a, b = min(a, b), max(a, b)
            key = a * n + b
            if key in forbidden or key in seen:
                continue
            seen.add(key)
            out.append((a, b))
            if len(out) == count:
                break
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def _bilinear_loss_grad(Z, pairs, y, alpha):
    a, b = pairs[:, 0], pairs[:, 1]
    m = y.size

    def loss_grad(theta):
        E = Z @ theta
        s = np.einsum("ij,ij->i", E[a], E[b])
        # softplus(s) - y*s, computed stably
        loss = (np.logaddexp(0.0, s) - y * s).sum() / m + 0.5 * alpha * (theta**2).sum()
        g = (1.0 / (1.0 + np.exp(-s)) - y) / m
        G = np.zeros_like(E)
        np.add.at(G, a, g[:, None] * E[b])
        np.add.at(G, b, g[:, None] * E[a])
        return loss, Z.T @ G + alpha * theta

    return loss_grad


def _auc(emb, pos, neg):
    score = lambda p: np.einsum("ij,ij->i", emb[p[:, 0]], emb[p[:, 1]])
    y = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    return float(roc_auc_score(y, np.concatenate([score(pos), score(neg)])))


def train_lp(cg: CoarseGraph, K: int = 2, config: TrainConfig | None = None) -> SgcModel:
    """Fit a bilinear dot-product scorer on coarse edges against seeded non-edges."""
    config = config or TrainConfig()
    K = check_positive_int(K, "K", 0)
    A = sp.triu(cg.adjacency, k=1).tocoo()
    pos = np.column_stack([A.row, A.col]).astype(np.int64)
    if pos.shape[0] == 0:
        raise InputError("coarse graph has no edges between distinct supernodes")
    pos = pos[np.lexsort((pos[:, 1], pos[:, 0]))]
    rng = np.random.default_rng(config.seed)
    neg = sample_negative_pairs(cg.n, pos.shape[0], _pair_keys(pos, cg.n), rng)
    Z = propagate(cg, K)
    scale = _scale(Z)
    Z = Z * scale
    d, e = Z.shape[1], check_positive_int(config.embed_dim, "embed_dim")
    theta0 = rng.normal(0.0, 1.0 / np.sqrt(e), size=(d, e))
    pairs = np.vstack([pos, neg])
    y = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    theta, history = _descend(_bilinear_loss_grad(Z, pairs, y, config.alpha), theta0,
                              config.lp_lr, check_positive_int(config.lp_epochs, "lp_epochs", 0))
    return SgcModel(theta, K, config, scale, None, history)


def train_eval_lp(cg: CoarseGraph, g: Graph, held_out: dict, K: int = 2,
                  config: TrainConfig | None = None, ratio: float = 1.0,
                  full_edges=None) -> EvalReport:
    """Train on ``cg`` and report AUC on held-out edges of the original graph.

    ``g`` is the training graph (held-out edges removed).  Negatives avoid every
    edge of ``g``, the held-out edges, and ``full_edges`` when given.
    """
    config = config or TrainConfig()
    tic = time.perf_counter()
    model = train_lp(cg, K, config)
    train_s = time.perf_counter() - tic
    emb = model.embed(g)
    forbidden = [_pair_keys(g.edge_array(), g.n)]
    forbidden += [_pair_keys(v, g.n) for v in held_out.values()]
    if full_edges is not None:
        forbidden.append(_pair_keys(full_edges, g.n))
    forbidden = np.unique(np.concatenate(forbidden))
    rng = np.random.default_rng(config.seed + 1)
    res = {}
    for name in ("valid", "test"):
        pos = np.asarray(held_out[name], dtype=np.int64).reshape(-1, 2)
        if pos.shape[0] == 0:
            res[name] = float("nan")
            continue
        neg = sample_negative_pairs(g.n, pos.shape[0], forbidden, rng)
        forbidden = np.union1d(forbidden, _pair_keys(neg, g.n))
        res[name] = _auc(emb, pos, neg)
    return EvalReport("lp", "auc", res["valid"], res["test"], ratio, 0.0, train_s)
