"""Leave-one-year-out cross-validation over models and feature sets."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..learners import (
    fit_gbt, fit_intercept_only, fit_lasso_path, fit_random_forest, variable_importance,
)
from .metrics import MetricUnavailable, auc, interval_coverage, rmse, roc_curve

MODELS = ("intercept", "lasso", "forest", "boosted")
BASELINE = "intercept"
INTERVAL_PROBS = (0.025, 0.975)
TOP_K = 10


class GridError(RuntimeError):
    """A learner failed inside a grid cell; the message names the cell."""


@dataclass(frozen=True)
class LoyoSplit:
    year: int
    train: np.ndarray
    test: np.ndarray


def make_loyo_splits(years) -> list[LoyoSplit]:
    """One split per distinct edition year (accepts a FeatureMatrix or an array)."""
    years = np.asarray(getattr(years, "edition_year", years))
    distinct = np.unique(years)
    if distinct.size < 2:
        raise ValueError("leave-one-year-out needs at least two edition years")
    splits = []
    for y in distinct:
        test = years == y
        train = ~test
        assert not np.any(train & test) and np.all(train | test)
        splits.append(LoyoSplit(int(y), train, test))
    return splits


def default_hyperparameters(model, task):
    """Per-model keyword arguments; callers override through ``params``."""
    if model == "lasso":
        return {"n_lambda": 100, "cv_folds": 10}
    if model == "forest":
        return {"n_trees": 100}
    if model == "boosted":
        return {"n_rounds": 100, "max_depth": 3, "learning_rate": 0.3, "lambda_l2": 1.0}
    return {}


def fit_model(model, task, X, y, groups=None, seed=0, params=None, n_jobs=1):
    """Train one learner for a task (``passage_time`` or ``dropout``).

    The forest is fit in quantile mode for passage times (giving means and
    intervals from the same trees) and in probability mode for dropout.
    """
    kw = {**default_hyperparameters(model, task), **(params or {})}
    if model == "intercept":
        return fit_intercept_only(y)
    if model == "lasso":
        loss = "squared_error" if task == "passage_time" else "logistic"
        return fit_lasso_path(X, y, loss=loss, groups=groups, seed=seed, **kw)
    if model == "forest":
        mode = "quantile" if task == "passage_time" else "probability"
        return fit_random_forest(X, y, mode=mode, seed=seed, n_jobs=n_jobs, **kw)
    if model == "boosted":
        loss = "squared_error" if task == "passage_time" else "logistic"
        return fit_gbt(X, y, loss=loss, **kw)
    raise ValueError(f"unknown model {model!r}; choose from {MODELS}")


def predict_model(model, X, with_interval=False):
    """Point predictions, plus (lower, upper) when the model supports quantiles."""
    pred = model.predict(X)
    if with_interval and getattr(model, "mode", None) == "quantile":
        q = model.predict_quantiles(X, INTERVAL_PROBS)
        return pred, q[:, 0], q[:, 1]
    return pred, None, None


@dataclass
class CellResult:
    """Pooled out-of-fold predictions for one (task, model, selector)."""

    task: str
    model: str
    selector: str
    truth: np.ndarray
    pred: np.ndarray
    checkpoint: np.ndarray
    year: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    importance: list = field(default_factory=list)
    runner_keys: list = field(default_factory=list)


@dataclass
class GridReport:
    cells: list[CellResult]
    runs: list[dict]

    def cell(self, task, model, selector) -> CellResult:
        for c in self.cells:
            if (c.task, c.model, c.selector) == (task, model, selector):
                return c
        raise KeyError((task, model, selector))

    # -- tables (lists of dicts with stable keys) --

    def overall(self) -> list[dict]:
        rows = []
        for c in self.cells:
            rows.append({"task": c.task, "model": c.model, "selector": c.selector,
                         "metric": metric_name(c.task), "value": cell_metric(c.task, c.truth, c.pred),
                         "n": int(c.truth.size)})
        return rows

    def per_checkpoint(self) -> list[dict]:
        rows = []
        for c in self.cells:
            for k in np.unique(c.checkpoint):
                m = c.checkpoint == k
                rows.append({"task": c.task, "model": c.model, "selector": c.selector,
                             "checkpoint": int(k), "metric": metric_name(c.task),
                             "value": cell_metric(c.task, c.truth[m], c.pred[m]),
                             "n": int(m.sum())})
        return rows

    def roc(self) -> list[dict]:
        rows = []
        for c in self.cells:
            if c.task != "dropout":
                continue
            try:
                fpr, tpr, thr = roc_curve(c.pred, c.truth)
            except MetricUnavailable:
                continue
            for a, b, th in zip(fpr, tpr, thr):
                rows.append({"model": c.model, "selector": c.selector, "fpr": float(a),
                             "tpr": float(b), "threshold": float(th)})
        return rows

    def coverage(self) -> list[dict]:
        rows = []
        for c in self.cells:
            if c.lower is None:
                continue
            groups = [("all", np.ones(c.truth.size, dtype=bool))]
            groups += [(str(int(k)), c.checkpoint == k) for k in np.unique(c.checkpoint)]
            for label, m in groups:
                cov = interval_coverage(c.lower[m], c.upper[m], c.truth[m])
                rows.append({"model": c.model, "selector": c.selector, "checkpoint": label,
                             "coverage": cov["coverage"], "mean_width_s": cov["mean_width"],
                             "n": cov["n"]})
        return rows

    def importance(self) -> list[dict]:
        rows = []
        for c in self.cells:
            for rank, (name, score) in enumerate(c.importance, start=1):
                rows.append({"task": c.task, "model": c.model, "selector": c.selector,
                             "rank": rank, "feature": name, "importance": score})
        return rows


def metric_name(task) -> str:
    return "rmse_s" if task == "passage_time" else "auc"


def cell_metric(task, truth, pred) -> float:
    """RMSE for passage times, AUC for dropout; NaN when AUC is unavailable."""
    if truth.size == 0:
        return float("nan")
    if task == "passage_time":
        return rmse(pred, truth)
    try:
        return auc(pred, truth)
    except MetricUnavailable:
        return float("nan")


def _averaged_importance(models, columns, top=TOP_K):
    """Mean normalized importance across fold models, top entries descending."""
    scores = np.zeros(len(columns))
    n = 0
    for m in models:
        imp = variable_importance(m, columns)
        if not imp:
            continue
        n += 1
        lookup = dict(imp)
        scores += np.array([lookup[c] for c in columns])
    if n == 0:
        return []
    scores /= n
    order = sorted(range(len(columns)), key=lambda j: (-scores[j], j))
    return [(columns[j], float(scores[j])) for j in order[:top]]


def run_cell(matrix, model, selector, splits, seed=0, params=None, n_jobs=1):
    """Train/test over every split for one (model, selector) on one task."""
    fm = matrix.select(selector)
    task = fm.task
    truth, pred, ks, yrs, lo, hi = [], [], [], [], [], []
    fold_models, runs, keys = [], [], []
    for sp in splits:
        Xtr, ytr = fm.X[sp.train], fm.y[sp.train]
        try:
            mdl = fit_model(model, task, Xtr, ytr, groups=fm.target_checkpoint[sp.train],
                            seed=seed, params=(params or {}).get(model), n_jobs=n_jobs)
            p, l, u = predict_model(mdl, fm.X[sp.test], with_interval=task == "passage_time")
        except Exception as exc:
            raise GridError(f"{task}/{model}/{selector}/holdout {sp.year}: {exc}") from exc
        fold_models.append(mdl)
        truth.append(fm.y[sp.test])
        pred.append(p)
        ks.append(fm.target_checkpoint[sp.test])
        yrs.append(fm.edition_year[sp.test])
        keys.extend(fm.runner_keys[i] for i in np.flatnonzero(sp.test))
        if l is not None:
            lo.append(l)
            hi.append(u)
        runs.append({"task": task, "model": model, "selector": selector, "holdout_year": sp.year,
                     "n_train": int(sp.train.sum()), "n_test": int(sp.test.sum()),
                     "metric": metric_name(task),
                     "value": cell_metric(task, fm.y[sp.test], p)})
    cell = CellResult(task=task, model=model, selector=selector, truth=np.concatenate(truth),
                      pred=np.concatenate(pred), checkpoint=np.concatenate(ks),
                      year=np.concatenate(yrs),
                      lower=np.concatenate(lo) if lo else None,
                      upper=np.concatenate(hi) if hi else None,
                      importance=_averaged_importance(fold_models, fm.columns),
                      runner_keys=keys)
    return cell, runs


def run_grid(matrices, models, selectors, seed=0, params=None, splits=None, threads=1):
    """Evaluate every (task, model, selector) cell with leave-one-year-out CV.

    ``matrices`` is one FeatureMatrix or a list of them (one per task). The
    intercept-only baseline is always added. ``splits`` overrides the default
    LOYO splits (e.g. a single holdout year). Cells run concurrently when
    ``threads > 1``; results do not depend on the thread count.
    """
    if not isinstance(matrices, (list, tuple)):
        matrices = [matrices]
    models = [BASELINE] + [m for m in models if m != BASELINE]
    for m in models:
        if m not in MODELS:
            raise ValueError(f"unknown model {m!r}; choose from {MODELS}")
    jobs = []
    for fm in matrices:
        sp = splits if splits is not None else make_loyo_splits(fm.edition_year)
        for model in models:
            for sel in selectors:
                jobs.append((fm, model, sel, sp))
    threads = max(1, int(threads or 1))

    def work(job):
        fm, model, sel, sp = job
        return run_cell(fm, model, sel, sp, seed=seed, params=params)

    if threads == 1:
        results = [work(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, jobs))
    cells = [r[0] for r in results]
    runs = [row for r in results for row in r[1]]
    return GridReport(cells=cells, runs=runs)


def format_value(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)
