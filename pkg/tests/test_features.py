import datetime as dt
import statistics
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trailcast.errors import EmptyHistoryError
from trailcast.features import (
    FIRST_TARGET, RUNNER_NUMERIC, SELECTORS, FeatureMatrix, assemble_design_matrix,
    compute_lag_features, compute_runner_features, km_effort, lag_block, lag_columns,
    months_between, segment_minimum,
)
from trailcast.ingest import (
    CHECKPOINT_FIELDS, MISSING, RaceHistoryEntry, derive_dropout_labels, passage_from_cumulative,
)


def race(date, rank=1, npart=10, dist=50.0, elev=2000.0, fin=20000, first=15000, last=30000,
         fem=2):
    return RaceHistoryEntry("r|x", "id", date, dist, elev, rank, npart, fin, first, last, fem)


# --- km-effort ------------------------------------------------------------

@pytest.mark.parametrize("d,e,want", [(171, 10000, 271), (0, 0, 0), (50, 2500, 75)])
def test_km_effort(d, e, want):
    assert km_effort(d, e) == want


def test_km_effort_rejects_negative():
    with pytest.raises(ValueError):
        km_effort(-1, 0)


# --- runner features ------------------------------------------------------

CUT = dt.date(2020, 8, 1)


def test_runner_feature_examples():
    rf = compute_runner_features([race(dt.date(2019, 1, 1), 10, 100),
                                  race(dt.date(2019, 2, 1), 30, 60)], CUT)
    assert rf.mean_rank_perc == pytest.approx(0.30, abs=1e-15)
    rf = compute_runner_features([race(dt.date(2019, 1, 1), fin=5 * 3600, first=4 * 3600,
                                       last=6 * 3600)], CUT)
    assert rf.perc_time_overall == 0.5


def test_runner_features_ignore_races_on_or_after_cutoff():
    before = [race(dt.date(2019, 1, 1), 5, 10)]
    rf = compute_runner_features(before + [race(CUT, 1, 10), race(dt.date(2021, 1, 1), 9, 10)],
                                 CUT)
    assert rf == compute_runner_features(before, CUT)
    with pytest.raises(EmptyHistoryError):
        compute_runner_features([race(CUT)], CUT)


def spreadsheet(rows, cutoff):
    """Each runner-level formula evaluated separately, row by row."""
    rows = [r for r in rows if r.race_date < cutoff]
    mean = statistics.fmean
    rp = [r.rank / r.n_participants for r in rows]
    ed = [r.elevation_gain_m / r.distance_km if r.distance_km else 0.0 for r in rows]
    first_date = min(r.race_date for r in rows)
    last_date = max(r.race_date for r in rows)

    def months(a, b):
        m = (b.year - a.year) * 12 + b.month - a.month
        return m - 1 if b.day < a.day else m

    return {
        "n_races": len(rows),
        "mean_rank_perc": mean(rp),
        "mean_rank": mean(r.rank for r in rows),
        "max_rank_perc": max(rp),
        "min_rank_perc": min(rp),
        "total_elev": sum(r.elevation_gain_m for r in rows),
        "mean_elev": mean(r.elevation_gain_m for r in rows),
        "total_dist": sum(r.distance_km for r in rows),
        "mean_dist": mean(r.distance_km for r in rows),
        "min_dist": min(r.distance_km for r in rows),
        "max_dist": max(r.distance_km for r in rows),
        "mean_elev_dist": mean(ed),
        "max_elev_dist": max(ed),
        "min_elev_dist": min(ed),
        "n_runners_race": mean(r.n_participants for r in rows),
        "perc_female_race": mean(r.n_female / r.n_participants for r in rows),
        "perc_time_overall": mean((r.finish_time_s - r.first_time_s)
                                  / (r.last_time_s - r.first_time_s) for r in rows),
        "perc_time_first": mean((r.finish_time_s - r.first_time_s) / r.first_time_s
                                for r in rows),
        "perc_time_last": mean((r.last_time_s - r.finish_time_s) / r.last_time_s for r in rows),
        "rank_perc_vs_elev_dist": mean(a * b for a, b in zip(rp, ed)),
        "years_activity": months(first_date, cutoff) / 12,
        "last_year_active": last_date.year,
        "time_last_race": months(last_date, cutoff),
    }


def test_runner_features_match_spreadsheet(rng):
    rows = []
    for j in range(12):
        npart = int(rng.integers(20, 500))
        first = int(rng.integers(3600, 20000))
        last = first + int(rng.integers(1000, 40000))
        rows.append(race(dt.date(2010 + j % 10, 1 + j % 12, 1 + (7 * j) % 28),
                         int(rng.integers(1, npart + 1)), npart, float(rng.uniform(10, 170)),
                         float(rng.uniform(0, 10000)), int(rng.integers(first, last + 1)),
                         first, last, int(rng.integers(0, npart))))
    rf = compute_runner_features(rows, CUT).as_dict()
    want = spreadsheet(rows, CUT)
    assert set(rf) == set(RUNNER_NUMERIC)
    for k in RUNNER_NUMERIC:
        assert rf[k] == pytest.approx(want[k], rel=1e-12, abs=1e-12), k
    assert rf["min_dist"] <= rf["mean_dist"] <= rf["max_dist"]
    assert 0 <= rf["min_rank_perc"] <= rf["mean_rank_perc"] <= rf["max_rank_perc"] <= 1


def test_months_between():
    assert months_between(dt.date(2019, 8, 2), dt.date(2020, 8, 1)) == 11
    assert months_between(dt.date(2019, 8, 1), dt.date(2020, 8, 1)) == 12


# --- lag features ---------------------------------------------------------

def meta_row(small_race):
    return small_race.meta[min(small_race.meta)][3]


def test_lag_examples(small_race):
    m = replace(meta_row(small_race), var_plus_m=500.0)
    f = compute_lag_features(4000, 3600, 3600, 3000, m)
    assert f["lag_min_1_var_plus_m"] == pytest.approx((4000 - 3600) / 3600 * 500, rel=1e-15)
    assert f["lag_min_1_var_plus_m"] == pytest.approx(55.5555555555556)
    f = compute_lag_features(3600, 3600, 3600, 3600, m)
    assert f["lag_perc"] == 0.5
    assert all(f[f"lag_min_1_{x}"] == 0 for x in CHECKPOINT_FIELDS)
    assert set(f) == set(lag_columns())


@pytest.mark.parametrize("args", [(0, 1, 1, 1), (5, -1, 1, 1), (5, 5, 6, 1)])
def test_lag_rejects_bad_times(args, small_race):
    with pytest.raises(ValueError):
        compute_lag_features(*args, meta_row(small_race))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10**6), st.integers(1, 10**6), st.floats(0.01, 1), st.floats(0.01, 1))
def test_lag_perc_bounds(yt, ytm1, f1, f2):
    x = np.arange(1.0, 1.0 + len(CHECKPOINT_FIELDS))
    row = lag_block([yt], [ytm1], [max(1.0, yt * f1)], [max(1.0, ytm1 * f2)], x)[0]
    f = dict(zip(lag_columns(), row))
    assert 0 < f["lag_perc"] < 1
    assert all(f[c] >= 0 for c in f if c.startswith("lag_min"))


# --- design matrix --------------------------------------------------------

@pytest.fixture(scope="module")
def full(small_race):
    return {task: assemble_design_matrix(small_race.tables, small_race.meta,
                                         small_race.history_index(), target=task)
            for task in ("passage_time", "dropout")}


def test_selector_nesting(full):
    fm = full["dropout"]
    cols = [fm.select(s).columns for s in SELECTORS]
    assert cols[0] == list(CHECKPOINT_FIELDS)
    for a, b in zip(cols, cols[1:]):
        assert set(a) < set(b) and b[:len(a)] == a
    assert len(set(cols[-1])) == len(cols[-1]) == fm.X.shape[1]


def test_row_counts_match_counting_oracle(small_race, full):
    hist = small_race.history_index()
    want_d = want_y = 0
    for year, tb in small_race.tables.items():
        start = small_race.meta[year][0].start_date
        has_hist = np.array([any(e.race_date < start for e in hist.get(k, ()))
                             for k in tb.runner_keys])
        for k in range(FIRST_TARGET, tb.n_checkpoints + 1):
            t = k - 1
            lags = (tb.passage[:, t - 1] > 0) & (tb.passage[:, t - 2] > 0) & has_hist
            passed = tb.cumulative[:, t - 1] != MISSING
            want_d += int((passed & lags).sum())
            want_y += int((passed & lags & (tb.passage[:, k - 1] > 0)).sum())
    assert full["dropout"].n_rows == want_d
    assert full["passage_time"].n_rows == want_y
    assert full["dropout"].target_checkpoint.min() >= FIRST_TARGET
    assert set(np.unique(full["dropout"].y)) <= {0.0, 1.0}
    assert np.all(full["passage_time"].y > 0)
    assert np.isfinite(full["dropout"].X).all()


def test_interaction_columns_are_products(full, rng):
    fm = full["passage_time"]
    pos = {c: i for i, c in enumerate(fm.columns)}
    rows = rng.choice(fm.n_rows, size=min(100, fm.n_rows), replace=False)
    X = fm.X[rows]
    Yt, Ytm1 = X[:, pos["lag_1"]], X[:, pos["lag_2"]]
    assert np.allclose(X[:, pos["lag_perc"]], Yt / (Yt + Ytm1), rtol=1e-12, atol=0)
    for f in CHECKPOINT_FIELDS:
        x = X[:, pos[f]]
        for name, factor in (("lag_1", Yt), ("lag_2", Ytm1), ("lag_perc", X[:, pos["lag_perc"]])):
            assert np.allclose(X[:, pos[f"{name}_{f}"]], factor * x, rtol=1e-12, atol=0)


def test_fastest_runner_has_zero_relative_lag(small_race):
    for tb in small_race.tables.values():
        for t in range(1, tb.n_checkpoints + 1):
            y = tb.Y(t)
            if (y > 0).any():
                m = segment_minimum(tb, t)
                assert (y[y > 0] == m[y > 0]).any()


def test_live_minimum_is_never_below_retrospective(small_race):
    for tb in small_race.tables.values():
        for t in range(1, tb.n_checkpoints + 1):
            ok = tb.Y(t) > 0
            live, retro = segment_minimum(tb, t, "live"), segment_minimum(tb, t)
            assert np.all(live[ok] >= retro[ok]) and np.all(live[ok] <= tb.Y(t)[ok])


def test_future_data_does_not_leak(small_race, full):
    k = 4
    tables = {}
    for year, tb in small_race.tables.items():
        cum = tb.cumulative.copy()
        cum[:, k:] = MISSING   # forget every scan after checkpoint k
        tables[year] = derive_dropout_labels(replace(tb, cumulative=cum,
                                                     passage=passage_from_cumulative(cum)))
    hist = {key: list(v) + [replace(v[0], race_date=dt.date(2030, 1, 1), rank=1)]
            for key, v in small_race.history_index().items()}
    cut = assemble_design_matrix(tables, small_race.meta, hist, target="dropout",
                                 levels=full["dropout"].levels)
    a = full["dropout"].target_checkpoint <= k
    b = cut.target_checkpoint <= k
    assert np.array_equal(full["dropout"].X[a], cut.X[b])
    assert np.array_equal(full["dropout"].y[a], cut.y[b])


def test_determinism_and_save_load(small_race, full, tmp_path):
    again = assemble_design_matrix(small_race.tables, small_race.meta, small_race.history_index(),
                                   target="passage_time")
    assert again.columns == full["passage_time"].columns
    assert np.array_equal(again.X, full["passage_time"].X)
    full["passage_time"].save(tmp_path / "m.csv")
    back = FeatureMatrix.load(tmp_path / "m.csv")
    assert np.array_equal(back.X, full["passage_time"].X)
    assert back.runner_keys == full["passage_time"].runner_keys
