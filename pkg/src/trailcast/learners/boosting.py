"""Second-order gradient boosting with exact greedy, depth-limited trees."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._backend import get_kernels
from .tree import DecisionTree, as_float_matrix

LOSSES = ("squared_error", "logistic")
LOGIT_CLAMP = 15.0


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def _loss_value(loss, y, margin):
    if loss == "squared_error":
        return float(np.mean((y - margin) ** 2))
    # log(1 + exp(-m)) for y=1, log(1 + exp(m)) for y=0
    s = np.where(y == 1, -margin, margin)
    return float(np.mean(np.logaddexp(0.0, s)))


def _grad_hess(loss, y, margin):
    if loss == "squared_error":
        return margin - y, np.ones_like(y)
    p = sigmoid(margin)
    return p - y, np.maximum(p * (1.0 - p), 1e-16)


@dataclass
class BoostedModel:
    trees: list[DecisionTree]
    learning_rate: float
    initial_score: float
    loss: str
    n_rounds: int
    max_depth: int
    lambda_l2: float
    min_child_weight: float
    n_features: int
    train_loss: list[float] = field(default_factory=list)

    def predict_margin(self, X) -> np.ndarray:
        X = as_float_matrix(X)
        out = np.full(X.shape[0], self.initial_score)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out

    def predict(self, X) -> np.ndarray:
        """Expected value (squared error) or P(y = 1) (logistic)."""
        m = self.predict_margin(X)
        return sigmoid(m) if self.loss == "logistic" else m

    def feature_gains(self) -> np.ndarray:
        out = np.zeros(self.n_features)
        for t in self.trees:
            out += t.feature_gains()
        return out

    def hyperparameters(self) -> dict:
        return {"loss": self.loss, "n_rounds": self.n_rounds, "max_depth": self.max_depth,
                "learning_rate": self.learning_rate, "lambda_l2": self.lambda_l2,
                "min_child_weight": self.min_child_weight}

    def to_payload(self) -> dict:
        return {**self.hyperparameters(), "initial_score": self.initial_score,
                "n_features": self.n_features, "train_loss": list(self.train_loss),
                "trees": [t.to_payload() for t in self.trees]}

    @classmethod
    def from_payload(cls, d: dict) -> "BoostedModel":
        return cls(trees=[DecisionTree.from_payload(t) for t in d["trees"]],
                   learning_rate=float(d["learning_rate"]), initial_score=float(d["initial_score"]),
                   loss=d["loss"], n_rounds=int(d["n_rounds"]), max_depth=int(d["max_depth"]),
                   lambda_l2=float(d["lambda_l2"]), min_child_weight=float(d["min_child_weight"]),
                   n_features=int(d["n_features"]), train_loss=[float(v) for v in d["train_loss"]])


def _grow_tree(kern, X, order, g, h, max_depth, lam, mcw):
    """Level-wise exact greedy tree on gradient statistics.

    Leaves hold the raw weight -G / (H + lambda); shrinkage is applied at
    prediction time.
    """
    n, p = X.shape
    feature, threshold, left, right = [-1], [0.0], [-1], [-1]
    value, n_node, gain = [0.0], [n], [0.0]
    node_of_row = np.zeros(n, dtype=np.int64)
    level = [0]
    for _ in range(max_depth):
        if not level:
            break
        bf, bt, bg, G, H = kern.gbt_level_splits(X, order, node_of_row, g, h, len(level), lam, mcw)
        next_level = []
        new_assign = np.full(n, -1, dtype=np.int64)
        for k, node in enumerate(level):
            value[node] = -G[k] / (H[k] + lam)
            if bf[k] < 0:
                continue
            lid = len(feature)
            for lst, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1),
                           (value, 0.0), (n_node, 0), (gain, 0.0)):
                lst.append(v)
                lst.append(v)
            feature[node] = int(bf[k])
            threshold[node] = float(bt[k])
            left[node] = lid
            right[node] = lid + 1
            gain[node] = float(bg[k])
            members = node_of_row == k
            go_left = members & (X[:, bf[k]] <= bt[k])
            go_right = members & ~go_left
            new_assign[go_left] = len(next_level)
            new_assign[go_right] = len(next_level) + 1
            n_node[lid] = int(go_left.sum())
            n_node[lid + 1] = int(go_right.sum())
            next_level.extend([lid, lid + 1])
        level = next_level
        node_of_row = new_assign
    for k, node in enumerate(level):
        idx = np.flatnonzero(node_of_row == k)
        Gk = np.cumsum(g[idx])[-1] if idx.size else 0.0
        Hk = np.cumsum(h[idx])[-1] if idx.size else 0.0
        value[node] = -Gk / (Hk + lam)
    m = len(feature)
    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int64), threshold=np.asarray(threshold),
        left=np.asarray(left, dtype=np.int64), right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64), n_node=np.asarray(n_node, dtype=np.int64),
        gain=np.asarray(gain, dtype=np.float64), leaf_start=np.full(m, -1, dtype=np.int64),
        leaf_count=np.zeros(m, dtype=np.int64), leaf_rows=None, n_features=p)


def fit_gbt(X, y, loss="squared_error", n_rounds=100, max_depth=3, learning_rate=0.3,
            lambda_l2=1.0, min_child_weight=1.0, backend=None) -> BoostedModel:
    """Fit a boosted ensemble of depth-limited trees.

    Each round fits a tree to the gradient/hessian of the current loss. Split
    gain is ``(G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)) / 2``;
    a split must have positive gain and at least ``min_child_weight`` hessian
    mass on each side.
    """
    if loss not in LOSSES:
        raise ValueError(f"loss must be one of {LOSSES}, got {loss!r}")
    X = as_float_matrix(X)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, p = X.shape
    if n == 0:
        raise ValueError("cannot fit a boosted model on an empty data set")
    if y.shape != (n,) or not np.all(np.isfinite(y)):
        raise ValueError("y must be finite and 1-D with one entry per row")
    if max_depth < 0 or n_rounds < 0:
        raise ValueError("max_depth and n_rounds must be non-negative")
    if loss == "logistic":
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("logistic loss requires labels in {0, 1}")
        rate = float(np.mean(y))
        if rate in (0.0, 1.0):
            warnings.warn("degenerate base rate; clamping initial log-odds at +/-15",
                          RuntimeWarning, stacklevel=2)
            init = LOGIT_CLAMP if rate == 1.0 else -LOGIT_CLAMP
        else:
            init = float(np.clip(np.log(rate / (1.0 - rate)), -LOGIT_CLAMP, LOGIT_CLAMP))
    else:
        init = float(np.mean(y))
    kern = get_kernels(backend)
    order = np.asfortranarray(np.argsort(X, axis=0, kind="stable")).astype(np.int64)
    margin = np.full(n, init)
    trees, losses = [], []
    for _ in range(n_rounds):
        g, h = _grad_hess(loss, y, margin)
        tree = _grow_tree(kern, X, order, np.ascontiguousarray(g), np.ascontiguousarray(h),
                          int(max_depth), float(lambda_l2), float(min_child_weight))
        margin += learning_rate * tree.predict(X)
        trees.append(tree)
        losses.append(_loss_value(loss, y, margin))
    return BoostedModel(trees=trees, learning_rate=float(learning_rate), initial_score=init,
                        loss=loss, n_rounds=int(n_rounds), max_depth=int(max_depth),
                        lambda_l2=float(lambda_l2), min_child_weight=float(min_child_weight),
                        n_features=p, train_loss=losses)
