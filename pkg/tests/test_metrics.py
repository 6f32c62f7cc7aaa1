import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trailcast.evaluation.metrics import (
    MetricUnavailable, auc, interval_coverage, rmse, roc_curve, trapezoid_area,
)


def pairwise_auc(scores, labels):
    """O(n^2) oracle, exact: wins plus half ties over all positive/negative pairs."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    twice = sum(2 if p > q else 1 if p == q else 0 for p, q in itertools.product(pos, neg))
    return Fraction(twice, 2 * len(pos) * len(neg))


def test_rmse_examples():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(np.sqrt(12.5), abs=0)


def test_rmse_matches_direct_recomputation(rng):
    p, t = rng.normal(size=1000), rng.normal(size=1000)
    direct = (sum((a - b) ** 2 for a, b in zip(p, t)) / 1000) ** 0.5
    assert abs(rmse(p, t) - direct) <= 1e-12 * direct


def test_rmse_rejects_empty_and_mismatch():
    with pytest.raises(ValueError):
        rmse([], [])
    with pytest.raises(ValueError):
        rmse([1.0], [1.0, 2.0])


def test_auc_trivial_cases():
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc([0.5] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
    with pytest.raises(MetricUnavailable):
        auc([0.1, 0.2], [1, 1])


def test_auc_equals_pairwise_enumeration(rng):
    for _ in range(30):
        n = 30
        scores = rng.integers(0, 8, n).astype(float)  # coarse grid forces ties
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            continue
        assert auc(scores, labels) == float(pairwise_auc(scores, labels))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 1)), min_size=2, max_size=40))
def test_auc_label_flip_and_order_invariance(pairs):
    scores = np.array([p[0] for p in pairs], dtype=float)
    labels = np.array([p[1] for p in pairs])
    if labels.min() == labels.max():
        return
    a = auc(scores, labels)
    assert 0.0 <= a <= 1.0
    # exact in rationals; each float is the correctly rounded rational
    exact = pairwise_auc(scores, labels)
    assert a == float(exact)
    assert auc(scores, 1 - labels) == float(1 - exact)
    perm = np.random.default_rng(len(pairs)).permutation(len(pairs))
    assert auc(scores[perm], labels[perm]) == a


def test_roc_curve_shapes():
    fpr, tpr, _ = roc_curve([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
    assert (0.0, 1.0) in set(zip(fpr.tolist(), tpr.tolist()))
    fpr, tpr, _ = roc_curve([0.3] * 5, [0, 1, 0, 1, 1])
    assert fpr.tolist() == [0.0, 1.0] and tpr.tolist() == [0.0, 1.0]


def test_roc_area_equals_auc(rng):
    for _ in range(100):
        n = int(rng.integers(2, 60))
        scores = np.round(rng.random(n), 1)
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            continue
        fpr, tpr, _ = roc_curve(scores, labels)
        assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)
        assert (fpr[0], tpr[0], fpr[-1], tpr[-1]) == (0.0, 0.0, 1.0, 1.0)
        assert abs(trapezoid_area(fpr, tpr) - auc(scores, labels)) <= 1e-12


def test_interval_coverage_examples():
    y = np.array([1.0, 2.0, 3.0])
    assert interval_coverage(y - 1, y + 1, y) == {"coverage": 1.0, "mean_width": 2.0, "n": 3}
    c = interval_coverage(y, y, y)
    assert c["coverage"] == 1.0 and c["mean_width"] == 0.0
    assert interval_coverage([0.0], [0.5], [1.0])["coverage"] == 0.0
    with pytest.raises(ValueError):
        interval_coverage([2.0], [1.0], [1.5])
