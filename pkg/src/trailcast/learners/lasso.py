"""L1-penalised linear and logistic regression along a lambda path.

Cyclic coordinate descent with soft-thresholding; the logistic loss is handled
by iteratively reweighted quadratic approximations. Model selection uses
K-fold cross-validation and the one-standard-error rule.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import get_kernels
from .boosting import sigmoid

LOSSES = ("squared_error", "logistic")
CRITERIA = ("mse", "auc")

_CD_TOL = 1e-12
_MAX_PASSES = 100_000
_LOGIT_CD_TOL = 1e-9
_IRLS_MAX = 25
_IRLS_TOL = 1e-8
_W_MIN = 1e-5


@dataclass
class LassoPath:
    """Coefficients along a descending lambda grid.

    Coefficients and intercepts live on the standardized scale;
    ``x_mean``/``x_scale`` map raw inputs onto it.
    """

    lambdas: np.ndarray
    coefs: np.ndarray
    intercepts: np.ndarray
    x_mean: np.ndarray
    x_scale: np.ndarray
    loss: str
    criterion: str
    cv_mean: np.ndarray | None = None
    cv_se: np.ndarray | None = None
    best_index: int | None = None
    selected_index: int = 0

    @property
    def selected_lambda(self) -> float:
        return float(self.lambdas[self.selected_index])

    @property
    def coef(self) -> np.ndarray:
        return self.coefs[self.selected_index]

    @property
    def intercept(self) -> float:
        return float(self.intercepts[self.selected_index])

    def standardize(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.x_mean) / self.x_scale

    def decision_function(self, X, index=None) -> np.ndarray:
        i = self.selected_index if index is None else index
        return self.intercepts[i] + self.standardize(X) @ self.coefs[i]

    def predict(self, X, index=None) -> np.ndarray:
        eta = self.decision_function(X, index)
        return sigmoid(eta) if self.loss == "logistic" else eta

    def hyperparameters(self) -> dict:
        return {"loss": self.loss, "criterion": self.criterion, "n_lambda": int(self.lambdas.size)}

    def to_payload(self) -> dict:
        def arr(a):
            return None if a is None else [None if not np.isfinite(v) else float(v)
                                           for v in np.ravel(a)]
        return {
            **self.hyperparameters(),
            "lambdas": self.lambdas.tolist(),
            "coefs": self.coefs.tolist(),
            "intercepts": self.intercepts.tolist(),
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "cv_mean": arr(self.cv_mean),
            "cv_se": arr(self.cv_se),
            "best_index": self.best_index,
            "selected_index": self.selected_index,
        }

    @classmethod
    def from_payload(cls, d: dict) -> "LassoPath":
        def arr(a):
            return None if a is None else np.array([np.nan if v is None else v for v in a],
                                                   dtype=np.float64)
        coefs = np.asarray(d["coefs"], dtype=np.float64)
        if coefs.ndim == 1:
            coefs = coefs.reshape(len(d["lambdas"]), -1)
        return cls(lambdas=np.asarray(d["lambdas"], dtype=np.float64), coefs=coefs,
                   intercepts=np.asarray(d["intercepts"], dtype=np.float64),
                   x_mean=np.asarray(d["x_mean"], dtype=np.float64),
                   x_scale=np.asarray(d["x_scale"], dtype=np.float64),
                   loss=d["loss"], criterion=d["criterion"], cv_mean=arr(d["cv_mean"]),
                   cv_se=arr(d["cv_se"]), best_index=d["best_index"],
                   selected_index=int(d["selected_index"]))


def standardization(X):
    """Column means and population standard deviations (1 for constant columns)."""
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return mean, scale


def lambda_max(Xs, y) -> float:
    n = Xs.shape[0]
    return float(np.max(np.abs(Xs.T @ (y - y.mean()))) / n) if Xs.shape[1] else 0.0


def lambda_grid(lam_max, n_lambda=100, min_ratio=1e-3) -> np.ndarray:
    if lam_max <= 0:
        return np.zeros(n_lambda)
    return np.geomspace(lam_max, lam_max * min_ratio, n_lambda)


def solve_path(Xs, y, lambdas, loss="squared_error", backend=None):
    """Fit coefficients at every lambda (warm starts) on a standardized design.

    Returns (coefs[n_lambda, p], intercepts[n_lambda]).
    """
    kern = get_kernels(backend)
    Xs = np.asfortranarray(Xs, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = Xs.shape
    coefs = np.zeros((lambdas.size, p))
    intercepts = np.zeros(lambdas.size)
    beta = np.zeros(p)
    if loss == "squared_error":
        # covariance mode on centered columns; the intercept is recovered after
        ybar = y.mean()
        xbar = Xs.mean(axis=0)
        Xc = Xs - xbar
        G = np.ascontiguousarray(Xc.T @ Xc / n)
        c0 = Xc.T @ (y - ybar) / n
        c = c0.copy()
        scale = max(float(np.mean((y - ybar) ** 2)), 1e-300)
        lmax = float(np.max(np.abs(c0))) if p else 0.0
        for i, lam in enumerate(lambdas):
            if i == 0 and lam >= lmax:
                intercepts[i] = ybar
                continue
            kern.gram_coordinate_descent(G, c, beta, float(lam), _CD_TOL * scale, _MAX_PASSES)
            # refresh the gradient to stop rounding drift from accumulating
            c = c0 - G @ beta
            coefs[i] = beta
            intercepts[i] = ybar - xbar @ beta
        return coefs, intercepts

    rate = float(np.clip(y.mean(), 1e-12, 1 - 1e-12))
    b0 = float(np.log(rate / (1 - rate)))
    lmax = lambda_max(Xs, y)
    for i, lam in enumerate(lambdas):
        if i == 0 and lam >= lmax:
            intercepts[i] = b0
            continue
        for _ in range(_IRLS_MAX):
            # weighted quadratic approximation, solved in covariance mode on
            # weight-centered columns so the intercept drops out
            xb = Xs @ beta
            prob = sigmoid(b0 + xb)
            w = np.maximum(prob * (1 - prob), _W_MIN)
            z = b0 + xb + (y - prob) / w
            sw = float(w.sum())
            xw = (w @ Xs) / sw
            A = Xs * np.sqrt(w)[:, None]
            G = np.ascontiguousarray((A.T @ A) / n - (sw / n) * np.outer(xw, xw))
            c = (Xs.T @ (w * (z - xb)) - xw * float(w @ (z - xb))) / n
            old_beta = beta.copy()
            kern.gram_coordinate_descent(G, c, beta, float(lam), _LOGIT_CD_TOL, _MAX_PASSES)
            old_b0 = b0
            b0 = float(w @ (z - Xs @ beta)) / sw
            db = beta - old_beta
            change = max(float(np.max(np.diag(G) * db * db)) if p else 0.0,
                         (sw / n) * (b0 - old_b0) ** 2)
            if change < _IRLS_TOL:
                break
        coefs[i] = beta
        intercepts[i] = b0
    return coefs, intercepts


def stratified_folds(n, k, groups=None, seed=0) -> np.ndarray:
    """Fold id per row; rows are shuffled within each group and dealt round-robin."""
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=np.int64)
    groups = np.zeros(n, dtype=np.int64) if groups is None else np.asarray(groups)
    offset = 0
    for gval in np.unique(groups):
        idx = np.flatnonzero(groups == gval)
        idx = idx[rng.permutation(idx.size)]
        folds[idx] = (offset + np.arange(idx.size)) % k
        offset += idx.size
    return folds


def _fold_stat(criterion, y, pred):
    if criterion == "mse":
        return float(np.mean((y - pred) ** 2))
    from ..evaluation.metrics import auc

    if np.unique(y).size < 2:
        return np.nan
    return auc(pred, y)


def select_one_se(cv_mean, cv_se, criterion):
    """Index of the largest lambda (lowest index) within one SE of the best."""
    valid = np.isfinite(cv_mean)
    if not valid.any():
        return 0, 0
    if criterion == "mse":
        best = int(np.nanargmin(np.where(valid, cv_mean, np.inf)))
        ok = valid & (cv_mean <= cv_mean[best] + np.nan_to_num(cv_se[best]))
    else:
        best = int(np.nanargmax(np.where(valid, cv_mean, -np.inf)))
        ok = valid & (cv_mean >= cv_mean[best] - np.nan_to_num(cv_se[best]))
    return best, int(np.flatnonzero(ok)[0])


def fit_lasso_path(X, y, loss="squared_error", n_lambda=100, cv_folds=10, criterion=None,
                   groups=None, seed=0, lambda_min_ratio=1e-3, standardize=True,
                   backend=None) -> LassoPath:
    """Fit the regularization path and pick lambda by K-fold CV + one-SE rule.

    ``groups`` (e.g. the target checkpoint of every row) stratifies the folds.
    ``cv_folds=0`` skips cross-validation and selects the last lambda.
    """
    if loss not in LOSSES:
        raise ValueError(f"loss must be one of {LOSSES}, got {loss!r}")
    criterion = criterion or ("mse" if loss == "squared_error" else "auc")
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}, got {criterion!r}")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be 2-D and y 1-D with matching rows")
    if X.shape[0] == 0:
        raise ValueError("cannot fit on an empty data set")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in X or y")
    if loss == "logistic" and not np.all((y == 0) | (y == 1)):
        raise ValueError("logistic loss requires labels in {0, 1}")

    if standardize:
        mean, scale = standardization(X)
    else:
        mean, scale = np.zeros(X.shape[1]), np.ones(X.shape[1])
    Xs = (X - mean) / scale
    lambdas = lambda_grid(lambda_max(Xs, y), n_lambda, lambda_min_ratio)
    coefs, intercepts = solve_path(Xs, y, lambdas, loss, backend)

    path = LassoPath(lambdas=lambdas, coefs=coefs, intercepts=intercepts, x_mean=mean,
                     x_scale=scale, loss=loss, criterion=criterion,
                     selected_index=lambdas.size - 1)
    if cv_folds and cv_folds > 1:
        folds = stratified_folds(X.shape[0], cv_folds, groups, seed)
        stats = np.full((cv_folds, lambdas.size), np.nan)
        for k in range(cv_folds):
            tr, te = folds != k, folds == k
            if not te.any() or not tr.any():
                continue
            if loss == "logistic" and np.unique(y[tr]).size < 2:
                continue
            m, s = standardization(X[tr]) if standardize else (mean, scale)
            c, b = solve_path((X[tr] - m) / s, y[tr], lambdas, loss, backend)
            eta = b[None, :] + ((X[te] - m) / s) @ c.T
            pred = sigmoid(eta) if loss == "logistic" else eta
            for j in range(lambdas.size):
                stats[k, j] = _fold_stat(criterion, y[te], pred[:, j])
        cv_mean = np.full(lambdas.size, np.nan)
        cv_se = np.full(lambdas.size, np.nan)
        for j in range(lambdas.size):
            col = stats[:, j][np.isfinite(stats[:, j])]
            if col.size:
                cv_mean[j] = col.mean()
            if col.size > 1:
                cv_se[j] = col.std(ddof=1) / np.sqrt(col.size)
        path.cv_mean, path.cv_se = cv_mean, cv_se
        path.best_index, path.selected_index = select_one_se(cv_mean, cv_se, criterion)
    return path
