"""Shared CART core for the random forests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import get_kernels

MAX_DEPTH_UNBOUNDED = 1 << 30


def as_float_matrix(X, name="X"):
    """Validate a 2-D float matrix and return it in Fortran order."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return np.asfortranarray(X)


def seed_to_u64(seed) -> int:
    """Map an int seed or a numpy Generator onto a 64-bit kernel seed."""
    if isinstance(seed, np.random.Generator):
        return int(seed.integers(0, 2**63, dtype=np.int64))
    return int(np.random.SeedSequence(int(seed)).generate_state(1, dtype=np.uint64)[0])


@dataclass
class DecisionTree:
    """Array-encoded binary tree.

    Node ``i`` is internal when ``feature[i] >= 0``; rows with
    ``x[feature[i]] <= threshold[i]`` go to ``left[i]``. ``gain[i]`` is the
    impurity decrease of the split at node ``i`` (0 at leaves). For leaves,
    ``leaf_rows[leaf_start[i]:leaf_start[i] + leaf_count[i]]`` lists the training
    rows (with bootstrap multiplicity) that landed there, when retained.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_node: np.ndarray
    gain: np.ndarray
    leaf_start: np.ndarray
    leaf_count: np.ndarray
    leaf_rows: np.ndarray | None
    n_features: int

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max()) if self.n_nodes else 0

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return get_kernels().apply_tree(self.feature, self.threshold, self.left, self.right, X)

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def leaf_members(self, node: int) -> np.ndarray:
        if self.leaf_rows is None:
            raise ValueError("tree was fitted without retaining leaf rows")
        s = self.leaf_start[node]
        return self.leaf_rows[s:s + self.leaf_count[node]]

    def feature_gains(self) -> np.ndarray:
        out = np.zeros(self.n_features)
        internal = self.feature >= 0
        np.add.at(out, self.feature[internal], self.gain[internal])
        return out

    def to_payload(self) -> dict:
        d = {k: getattr(self, k).tolist() for k in
             ("feature", "threshold", "left", "right", "value", "n_node", "gain",
              "leaf_start", "leaf_count")}
        d["leaf_rows"] = None if self.leaf_rows is None else self.leaf_rows.tolist()
        d["n_features"] = self.n_features
        return d

    @classmethod
    def from_payload(cls, d: dict) -> "DecisionTree":
        ints = ("feature", "left", "right", "n_node", "leaf_start", "leaf_count")
        kw = {k: np.asarray(d[k], dtype=np.int64) for k in ints}
        for k in ("threshold", "value", "gain"):
            kw[k] = np.asarray(d[k], dtype=np.float64)
        kw["leaf_rows"] = None if d["leaf_rows"] is None else np.asarray(d["leaf_rows"], dtype=np.int64)
        return cls(n_features=int(d["n_features"]), **kw)


def column_order(X) -> np.ndarray:
    """Stable per-column argsort, Fortran-ordered, as the compiled kernel expects."""
    return np.asfortranarray(np.argsort(X, axis=0, kind="stable").astype(np.int64))


def fit_tree(X, y, max_depth=None, min_node_size=1, mtry=None, seed=0, rows=None,
             criterion="variance", keep_leaf_rows=True, backend=None, order=None) -> DecisionTree:
    """Grow a CART tree.

    Splits maximise the decrease in squared error over ``mtry`` candidate
    features drawn without replacement at every node; thresholds are midpoints
    between consecutive distinct values. Ties go to the lowest feature index,
    then the lowest threshold. ``min_node_size`` is the minimum number of rows
    in each child. ``criterion="gini"`` is only meaningful for 0/1 targets, where
    the Gini decrease is exactly twice the squared-error decrease, so the chosen
    splits coincide and only the stored gains are rescaled. ``order`` may pass
    a precomputed ``column_order(X)`` when many trees share X.
    """
    X = as_float_matrix(X)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, p = X.shape
    if n == 0:
        raise ValueError("cannot fit a tree on an empty data set")
    if y.shape != (n,):
        raise ValueError("y must be 1-D with one entry per row of X")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite values")
    if criterion not in ("variance", "gini"):
        raise ValueError(f"unknown criterion {criterion!r}")
    mtry = p if mtry is None else int(mtry)
    if not 1 <= mtry <= max(p, 1):
        raise ValueError(f"mtry must lie in [1, {p}], got {mtry}")
    if min_node_size < 1:
        raise ValueError("min_node_size must be >= 1")
    depth = MAX_DEPTH_UNBOUNDED if max_depth is None else int(max_depth)
    if depth < 0:
        raise ValueError("max_depth must be >= 0")
    rows = np.arange(n, dtype=np.int64) if rows is None else np.ascontiguousarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("cannot fit a tree on an empty sample")
    if rows.min() < 0 or rows.max() >= n:
        raise ValueError("row indices out of range")
    if order is None:
        order = column_order(X)
    elif order.shape != X.shape:
        raise ValueError("order must have the shape of X")
    kern = get_kernels(backend)
    out = kern.build_cart_tree(X, y, rows, depth, int(min_node_size), mtry, seed_to_u64(seed),
                               np.asfortranarray(order, dtype=np.int64))
    gain = out["gain"] * 2.0 if criterion == "gini" else out["gain"]
    return DecisionTree(
        feature=out["feature"], threshold=out["threshold"], left=out["left"],
        right=out["right"], value=out["value"], n_node=out["n_node"], gain=gain,
        leaf_start=out["leaf_start"], leaf_count=out["leaf_count"],
        leaf_rows=rows[out["leaf_pos"]] if keep_leaf_rows else None,
        n_features=p,
    )
