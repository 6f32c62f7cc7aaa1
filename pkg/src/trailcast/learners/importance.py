"""Normalized variable importance."""
import numpy as np

from .baseline import InterceptOnly
from .boosting import BoostedModel
from .forest import ForestModel
from .lasso import LassoPath


def importance_vector(model) -> np.ndarray:
    """Raw per-feature scores normalized to sum to 1 (all zeros if no splits).

    Forests sum impurity decrease over every split, boosted models sum split
    gain; for a lasso path the absolute standardized coefficients at the
    selected lambda are used.
    """
    if isinstance(model, (ForestModel, BoostedModel)):
        raw = model.feature_gains()
    elif isinstance(model, LassoPath):
        raw = np.abs(model.coef)
    elif isinstance(model, InterceptOnly):
        return np.zeros(0)
    else:
        raise TypeError(f"no importance defined for {type(model).__name__}")
    total = raw.sum()
    return raw / total if total > 0 else np.zeros_like(raw)


def variable_importance(model, columns=None, top=None):
    """List of (name, score) sorted by decreasing score, ties by column order."""
    if isinstance(model, InterceptOnly):
        return []
    scores = importance_vector(model)
    names = list(columns) if columns is not None else [f"x{j}" for j in range(scores.size)]
    if len(names) != scores.size:
        raise ValueError("column names do not match the model's feature count")
    order = sorted(range(scores.size), key=lambda j: (-scores[j], j))
    if top is not None:
        order = order[:top]
    return [(names[j], float(scores[j])) for j in order]
