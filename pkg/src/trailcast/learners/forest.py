"""Bagged CART forests: regression mean, probability and quantile modes."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._backend import get_kernels
from .tree import DecisionTree, as_float_matrix, column_order, fit_tree

MODES = ("regression_mean", "probability", "quantile")
N_TREES = 100


def default_mtry(p: int, mode: str) -> int:
    if mode == "probability":
        return max(1, math.ceil(math.sqrt(p)))
    return max(1, math.ceil(p / 3))


def default_min_node_size(mode: str) -> int:
    return 10 if mode == "probability" else 5


def _tree_streams(seed: int, tree_index: int):
    """Independent bootstrap/kernel streams per tree, so results do not depend
    on the number of worker threads."""
    return np.random.default_rng(np.random.SeedSequence((int(seed), int(tree_index))))


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    mode: str
    n_trees: int
    mtry: int
    min_node_size: int
    max_depth: int | None
    seed: int
    n_features: int
    y_train: np.ndarray | None = None
    _flat: dict | None = field(default=None, repr=False, compare=False)

    def predict(self, X) -> np.ndarray:
        """Mean over trees of the leaf means; a probability in probability mode."""
        X = as_float_matrix(X)
        out = np.zeros(X.shape[0])
        for tree in self.trees:
            out += tree.predict(X)
        return out / len(self.trees)

    def predict_proba(self, X) -> np.ndarray:
        if self.mode != "probability":
            raise ValueError("predict_proba requires a probability forest")
        p1 = self.predict(X)
        return np.column_stack([1.0 - p1, p1])

    def apply(self, X) -> np.ndarray:
        X = as_float_matrix(X)
        return np.column_stack([t.apply(X) for t in self.trees]).astype(np.int64)

    def bootstrap_rows(self, tree_index: int) -> np.ndarray:
        """Sorted bootstrap sample of one tree (quantile mode only)."""
        rows = self.trees[tree_index].leaf_rows
        if rows is None:
            raise ValueError("bootstrap rows are retained only in quantile mode")
        return np.sort(rows)

    def _flatten(self) -> dict:
        if self._flat is None:
            node_offset, leaf_start, leaf_count, leaf_rows = [], [], [], []
            n_nodes = n_rows = 0
            for t in self.trees:
                node_offset.append(n_nodes)
                leaf_start.append(np.where(t.leaf_start >= 0, t.leaf_start + n_rows, -1))
                leaf_count.append(t.leaf_count)
                leaf_rows.append(t.leaf_rows)
                n_nodes += t.n_nodes
                n_rows += t.leaf_rows.size
            self._flat = {
                "node_offset": np.asarray(node_offset, dtype=np.int64),
                "leaf_start": np.concatenate(leaf_start).astype(np.int64),
                "leaf_count": np.concatenate(leaf_count).astype(np.int64),
                "leaf_rows": np.concatenate(leaf_rows).astype(np.int64),
            }
        return self._flat

    def predict_quantiles(self, X, probs) -> np.ndarray:
        """Conditional quantiles from leaf co-membership weights.

        Training row j gets weight ``mean_t count_t(j) / |leaf_t(x)|`` and the
        answer for each prob is ``inf{y : F(y) >= prob}`` of the weighted
        empirical CDF. Returns shape (n_rows, len(probs)).
        """
        if self.mode != "quantile":
            raise ValueError("predict_quantiles requires a forest fitted in quantile mode")
        probs = np.atleast_1d(np.asarray(probs, dtype=np.float64))
        if np.any((probs <= 0) | (probs >= 1)):
            raise ValueError("quantile probabilities must lie strictly inside (0, 1)")
        flat = self._flatten()
        leaf_ids = np.ascontiguousarray(self.apply(X))
        return get_kernels().forest_quantiles(
            leaf_ids, flat["node_offset"], flat["leaf_start"], flat["leaf_count"],
            flat["leaf_rows"], self.y_train, np.ascontiguousarray(probs))

    def feature_gains(self) -> np.ndarray:
        out = np.zeros(self.n_features)
        for t in self.trees:
            out += t.feature_gains()
        return out

    def hyperparameters(self) -> dict:
        return {"mode": self.mode, "n_trees": self.n_trees, "mtry": self.mtry,
                "min_node_size": self.min_node_size, "max_depth": self.max_depth}

    def to_payload(self) -> dict:
        return {
            **self.hyperparameters(),
            "seed": self.seed,
            "n_features": self.n_features,
            "y_train": None if self.y_train is None else self.y_train.tolist(),
            "trees": [t.to_payload() for t in self.trees],
        }

    @classmethod
    def from_payload(cls, d: dict) -> "ForestModel":
        return cls(
            trees=[DecisionTree.from_payload(t) for t in d["trees"]],
            mode=d["mode"], n_trees=int(d["n_trees"]), mtry=int(d["mtry"]),
            min_node_size=int(d["min_node_size"]), max_depth=d["max_depth"],
            seed=int(d["seed"]), n_features=int(d["n_features"]),
            y_train=None if d["y_train"] is None else np.asarray(d["y_train"], dtype=np.float64),
        )


def fit_random_forest(X, y, mode="regression_mean", n_trees=N_TREES, mtry=None,
                      min_node_size=None, max_depth=None, seed=0, n_jobs=1,
                      backend=None) -> ForestModel:
    """Fit ``n_trees`` CART trees, each on a size-n bootstrap sample.

    Probability mode grows regression trees on the 0/1 labels so each leaf mean
    is the class-1 fraction; quantile mode keeps every leaf's training rows.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    X = as_float_matrix(X)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, p = X.shape
    if n == 0:
        raise ValueError("cannot fit a forest on an empty data set")
    if mode == "probability" and not np.all((y == 0) | (y == 1)):
        raise ValueError("probability forests require labels in {0, 1}")
    mtry = default_mtry(p, mode) if mtry is None else int(mtry)
    min_node_size = default_min_node_size(mode) if min_node_size is None else int(min_node_size)
    criterion = "gini" if mode == "probability" else "variance"
    keep = mode == "quantile"
    order = column_order(X)

    def grow(t):
        rng = _tree_streams(seed, t)
        rows = rng.integers(0, n, size=n).astype(np.int64)
        return fit_tree(X, y, max_depth=max_depth, min_node_size=min_node_size, mtry=mtry,
                        seed=rng, rows=rows, criterion=criterion, keep_leaf_rows=keep,
                        backend=backend, order=order)

    if n_jobs is not None and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            trees = list(ex.map(grow, range(n_trees)))
    else:
        trees = [grow(t) for t in range(n_trees)]
    return ForestModel(trees=trees, mode=mode, n_trees=n_trees, mtry=mtry,
                       min_node_size=min_node_size, max_depth=max_depth, seed=int(seed),
                       n_features=p, y_train=y.copy() if keep else None)
