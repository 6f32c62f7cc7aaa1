import numpy as np
import pytest

from trailcast.learners import fit_gbt, fit_lasso_path, fit_random_forest, fit_tree, serialize_model
from trailcast.learners._backend import BACKEND, get_kernels

try:
    get_kernels("cython")
    HAVE_CYTHON = True
except ImportError:
    HAVE_CYTHON = False

needs_cython = pytest.mark.skipif(not HAVE_CYTHON, reason="compiled kernels not built")


def data(rng, n=300, p=6, ties=False):
    X = rng.normal(size=(n, p))
    if ties:
        X = np.round(X, 1)
    y = X[:, 0] - 2 * X[:, 1] ** 2 + 0.5 * rng.normal(size=n)
    return X, y


def test_active_backend_reported():
    assert BACKEND in ("cython", "python")
    with pytest.raises(ValueError):
        get_kernels("fortran")


@needs_cython
@pytest.mark.parametrize("ties", [False, True])
def test_tree_identical(rng, ties):
    X, y = data(rng, ties=ties)
    kw = dict(mtry=3, min_node_size=3, seed=11)
    a, b = fit_tree(X, y, backend="cython", **kw), fit_tree(X, y, backend="python", **kw)
    for f in ("feature", "threshold", "value", "gain", "leaf_rows"):
        assert np.array_equal(getattr(a, f), getattr(b, f)), f


@needs_cython
@pytest.mark.parametrize("mode", ["regression_mean", "probability", "quantile"])
def test_forest_identical(rng, mode):
    X, y = data(rng, 200, ties=True)
    if mode == "probability":
        y = (y > np.median(y)).astype(float)
    a = fit_random_forest(X, y, mode=mode, n_trees=10, seed=2, backend="cython")
    b = fit_random_forest(X, y, mode=mode, n_trees=10, seed=2, backend="python")
    assert serialize_model(a) == serialize_model(b)
    if mode == "quantile":
        probs = [0.025, 0.5, 0.975]
        qa = get_kernels("cython")
        assert np.array_equal(a.predict_quantiles(X[:30], probs), b.predict_quantiles(X[:30], probs))
        assert qa is not None


@needs_cython
@pytest.mark.parametrize("loss", ["squared_error", "logistic"])
def test_boosting_identical(rng, loss):
    X, y = data(rng, 200, ties=True)
    if loss == "logistic":
        y = (y > 0).astype(float)
    a = fit_gbt(X, y, loss=loss, n_rounds=20, backend="cython")
    b = fit_gbt(X, y, loss=loss, n_rounds=20, backend="python")
    assert np.allclose(a.predict(X), b.predict(X), rtol=1e-12, atol=1e-12)
    assert [t.feature.tolist() for t in a.trees] == [t.feature.tolist() for t in b.trees]


@needs_cython
@pytest.mark.parametrize("loss", ["squared_error", "logistic"])
def test_lasso_agrees(rng, loss):
    X, y = data(rng, 200)
    if loss == "logistic":
        y = (y > 0).astype(float)
    a = fit_lasso_path(X, y, loss=loss, cv_folds=0, backend="cython")
    b = fit_lasso_path(X, y, loss=loss, cv_folds=0, backend="python")
    assert np.allclose(a.coefs, b.coefs, atol=1e-6)
