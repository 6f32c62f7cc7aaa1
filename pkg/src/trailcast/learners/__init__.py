"""Learners: intercept-only, lasso path, CART forests, boosted trees."""
from ._backend import BACKEND
from .baseline import InterceptOnly, fit_intercept_only
from .boosting import BoostedModel, fit_gbt
from .forest import ForestModel, fit_random_forest
from .importance import importance_vector, variable_importance
from .lasso import LassoPath, fit_lasso_path
from .serialize import ModelFormatError, deserialize_model, serialize_model
from .tree import DecisionTree, fit_tree

__all__ = [
    "BACKEND", "BoostedModel", "DecisionTree", "ForestModel", "InterceptOnly", "LassoPath",
    "ModelFormatError", "deserialize_model", "fit_gbt", "fit_intercept_only", "fit_lasso_path",
    "fit_random_forest", "fit_tree", "importance_vector", "serialize_model",
    "variable_importance",
]
