"""Compare the compiled kernels with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--rows 2000] [--features 40] [--repeat 3]

Each task is run with both backends on the same data; the table reports the
best wall time of ``--repeat`` runs and whether the outputs agree.
"""
import argparse
import time

import numpy as np

from trailcast.learners import fit_gbt, fit_lasso_path, fit_random_forest, fit_tree
from trailcast.learners._backend import get_kernels


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def tasks(X, y, yb):
    quantile_forest = {}

    def forest_q(backend):
        f = quantile_forest.setdefault(
            backend, fit_random_forest(X, y, mode="quantile", n_trees=20, seed=0, backend=backend))
        return lambda: f.predict_quantiles(X[:500], [0.025, 0.5, 0.975])

    return [
        ("single CART tree", lambda b: lambda: fit_tree(X, y, mtry=X.shape[1] // 3, seed=1,
                                                          backend=b).value,
         np.array_equal),
        ("forest, 20 trees", lambda b: lambda: fit_random_forest(
            X, y, n_trees=20, seed=0, backend=b).predict(X), np.array_equal),
        ("boosting, 30 rounds", lambda b: lambda: fit_gbt(
            X, yb, loss="logistic", n_rounds=30, backend=b).predict(X),
         lambda a, c: np.allclose(a, c, rtol=1e-12, atol=1e-12)),
        ("lasso path, 100 lambdas", lambda b: lambda: fit_lasso_path(
            X, y, cv_folds=0, backend=b).coefs, lambda a, c: np.allclose(a, c, atol=1e-6)),
        ("forest quantiles, 500 rows", forest_q, np.array_equal),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--features", type=int, default=40)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    try:
        get_kernels("cython")
    except ImportError:
        raise SystemExit("compiled kernels are not built; run `pip install -e . "
                         "--no-build-isolation` first")
    rng = np.random.default_rng(args.seed)
    X = np.round(rng.normal(size=(args.rows, args.features)), 2)
    y = 2 * X[:, 0] + np.sin(3 * X[:, 1]) + X[:, 2] * X[:, 3] + rng.normal(size=args.rows)
    yb = (y > np.median(y)).astype(float)

    print(f"{args.rows} rows x {args.features} features, best of {args.repeat}\n")
    print(f"{'task':<28}{'cython s':>10}{'python s':>10}{'speedup':>9}  agree")
    for name, make, same in tasks(X, y, yb):
        tc, oc = best_of(make("cython"), args.repeat)
        tp, op = best_of(make("python"), args.repeat)
        print(f"{name:<28}{tc:>10.3f}{tp:>10.3f}{tp / tc:>8.1f}x  {bool(same(oc, op))}")


if __name__ == "__main__":
    main()
