"""Checkpoint, runner-history and lag features; design-matrix assembly.

A design-matrix row is one (runner, edition, target checkpoint k) instance
with ``k >= 3``. Writing ``t = k - 1``, every row needs the segment times
``Y_t`` and ``Y_{t-1}``. Regression rows additionally need ``Y_k`` and
classification rows carry ``D_k``.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyHistoryError, ValidationError
from .ingest import CHECKPOINT_FIELDS, CheckpointMeta, PassageTable, RaceHistoryEntry

SELECTORS = (
    "checkpoint",
    "checkpoint+runner",
    "checkpoint+runner+lag1",
    "checkpoint+runner+lag1&2",
)
TASKS = ("passage_time", "dropout")
MIN_Y_MODES = ("retrospective", "live")
OTHER_LEVEL = "other"
FIRST_TARGET = 3

RUNNER_NUMERIC = (
    "n_races", "mean_rank_perc", "mean_rank", "max_rank_perc", "min_rank_perc",
    "total_elev", "mean_elev", "total_dist", "mean_dist", "min_dist", "max_dist",
    "mean_elev_dist", "max_elev_dist", "min_elev_dist", "n_runners_race",
    "perc_female_race", "perc_time_overall", "perc_time_first", "perc_time_last",
    "rank_perc_vs_elev_dist", "years_activity", "last_year_active", "time_last_race",
)
CATEGORICAL = ("gender", "nationality", "category")


def km_effort(distance_km: float, elevation_gain_m: float) -> float:
    """Distance plus one unit per 100 m of climb."""
    if distance_km < 0 or elevation_gain_m < 0:
        raise ValueError("distance and elevation gain must be non-negative")
    return distance_km + elevation_gain_m / 100.0


def months_between(start: dt.date, end: dt.date) -> int:
    """Whole calendar months from ``start`` to ``end``, truncated toward zero."""
    m = (end.year - start.year) * 12 + (end.month - start.month)
    if m > 0 and end.day < start.day:
        m -= 1
    elif m < 0 and end.day > start.day:
        m += 1
    return m


# --- runner-level ---------------------------------------------------------

@dataclass(frozen=True)
class RunnerFeatureVector:
    gender: str
    nationality: str
    category: str
    values: tuple  # aligned with RUNNER_NUMERIC

    def as_dict(self) -> dict:
        return dict(zip(RUNNER_NUMERIC, self.values))

    def __getattr__(self, name):
        if name in RUNNER_NUMERIC:
            return self.values[RUNNER_NUMERIC.index(name)]
        raise AttributeError(name)


def _ratio_or_zero(num, den):
    return num / den if den > 0 else 0.0


def compute_runner_features(history, cutoff: dt.date, gender="", nationality="",
                            category="") -> RunnerFeatureVector:
    """Aggregate the races dated strictly before ``cutoff``.

    Averages are unweighted over qualifying races. Races of zero distance
    contribute 0 to the elevation/distance ratios.
    """
    races: list[RaceHistoryEntry] = [e for e in history if e.race_date < cutoff]
    if not races:
        raise EmptyHistoryError(f"no race before {cutoff.isoformat()}")
    rank = np.array([e.rank for e in races], dtype=np.float64)
    npart = np.array([e.n_participants for e in races], dtype=np.float64)
    elev = np.array([e.elevation_gain_m for e in races], dtype=np.float64)
    dist = np.array([e.distance_km for e in races], dtype=np.float64)
    fin = np.array([e.finish_time_s for e in races], dtype=np.float64)
    first = np.array([e.first_time_s for e in races], dtype=np.float64)
    last = np.array([e.last_time_s for e in races], dtype=np.float64)
    fem = np.array([e.n_female for e in races], dtype=np.float64)
    rank_perc = rank / npart
    elev_dist = np.array([_ratio_or_zero(a, b) for a, b in zip(elev, dist)])
    spread = last - first
    time_overall = np.divide(fin - first, spread, out=np.zeros_like(fin), where=spread > 0)
    dates = sorted(e.race_date for e in races)
    vals = (
        float(len(races)),
        float(rank_perc.mean()),
        float(rank.mean()),
        float(rank_perc.max()),
        float(rank_perc.min()),
        float(elev.sum()),
        float(elev.mean()),
        float(dist.sum()),
        float(dist.mean()),
        float(dist.min()),
        float(dist.max()),
        float(elev_dist.mean()),
        float(elev_dist.max()),
        float(elev_dist.min()),
        float(npart.mean()),
        float((fem / npart).mean()),
        float(time_overall.mean()),
        float(((fin - first) / first).mean()),
        float(((last - fin) / last).mean()),
        float((elev_dist * rank_perc).mean()),
        months_between(dates[0], cutoff) / 12.0,
        float(dates[-1].year),
        float(months_between(dates[-1], cutoff)),
    )
    return RunnerFeatureVector(gender, nationality, category, vals)


# --- lag features ---------------------------------------------------------

def lag_columns(fields=CHECKPOINT_FIELDS, depth=2) -> list[str]:
    cols = ["lag_1"]
    cols += [f"lag_1_{f}" for f in fields]
    cols += [f"lag_min_1_{f}" for f in fields]
    if depth >= 2:
        cols += ["lag_2", "lag_perc"]
        cols += [f"lag_2_{f}" for f in fields]
        cols += [f"lag_perc_{f}" for f in fields]
        cols += [f"lag_min_2_{f}" for f in fields]
    return cols


def lag_block(Yt, Ytm1, minYt, minYtm1, x, depth=2) -> np.ndarray:
    """Vectorized lag features: one row per instance, columns as ``lag_columns``.

    ``x`` is (n, F) target-checkpoint features, or (F,) shared by all rows.
    """
    Yt = np.asarray(Yt, dtype=np.float64)
    Ytm1 = np.asarray(Ytm1, dtype=np.float64)
    minYt = np.broadcast_to(np.asarray(minYt, dtype=np.float64), Yt.shape)
    minYtm1 = np.broadcast_to(np.asarray(minYtm1, dtype=np.float64), Yt.shape)
    if np.any(Yt <= 0) or np.any(Ytm1 <= 0) or np.any(minYt <= 0) or np.any(minYtm1 <= 0):
        raise ValueError("passage times must be strictly positive")
    if np.any(minYt > Yt) or np.any(minYtm1 > Ytm1):
        raise ValueError("segment minimum exceeds a runner's time")
    x = np.broadcast_to(np.asarray(x, dtype=np.float64), (Yt.size, np.shape(x)[-1]))
    rel1 = ((Yt - minYt) / minYt)[:, None]
    parts = [Yt[:, None], Yt[:, None] * x, rel1 * x]
    if depth >= 2:
        perc = Yt / (Yt + Ytm1)
        rel2 = ((Ytm1 - minYtm1) / minYtm1)[:, None]
        parts += [Ytm1[:, None], perc[:, None], Ytm1[:, None] * x, perc[:, None] * x, rel2 * x]
    return np.hstack(parts)


def compute_lag_features(Y_t, Y_tm1, min_Yt, min_Ytm1, target_meta: CheckpointMeta) -> dict:
    """Lag features for a single instance, keyed by column name."""
    row = lag_block([Y_t], [Y_tm1], [min_Yt], [min_Ytm1], target_meta.feature_values())[0]
    return dict(zip(lag_columns(), row.tolist()))


def segment_minimum(table: PassageTable, t: int, mode="retrospective") -> np.ndarray:
    """Per-runner reference minimum of ``Y_t``.

    Retrospective: the minimum over every runner of the edition with ``Y_t``.
    Live: the minimum over runners who reached checkpoint ``t`` no later than
    the runner in question (the runner included). NaN where ``Y_t`` is missing.
    """
    if mode not in MIN_Y_MODES:
        raise ValueError(f"min_y mode must be one of {MIN_Y_MODES}, got {mode!r}")
    y = table.Y(t).astype(np.float64)
    ok = y > 0
    out = np.full(y.shape, np.nan)
    if not ok.any():
        return out
    if mode == "retrospective":
        out[ok] = y[ok].min()
        return out
    cum = table.cumulative[:, t - 1]
    idx = np.flatnonzero(ok)
    order = idx[np.lexsort((y[idx], cum[idx]))]
    running = np.minimum.accumulate(y[order])
    # runners tied on arrival time all see each other
    c = cum[order]
    last_of_tie = np.r_[np.flatnonzero(np.diff(c) != 0), c.size - 1]
    tie_end = np.repeat(last_of_tie, np.diff(np.r_[-1, last_of_tie]))
    out[order] = running[tie_end]
    return out


# --- design matrix --------------------------------------------------------

@dataclass
class FeatureMatrix:
    """Dense design matrix with per-row targets and metadata."""

    X: np.ndarray
    columns: list[str]
    y: np.ndarray
    task: str
    edition_year: np.ndarray
    target_checkpoint: np.ndarray
    runner_keys: list[str]
    selector: str = SELECTORS[-1]
    selector_columns: dict = field(default_factory=dict)
    levels: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    def select(self, selector: str) -> "FeatureMatrix":
        """Restrict to the columns of a (smaller or equal) nested selector."""
        if selector not in self.selector_columns:
            raise ValueError(f"unknown selector {selector!r}; known {list(self.selector_columns)}")
        names = self.selector_columns[selector]
        pos = {c: i for i, c in enumerate(self.columns)}
        missing = [c for c in names if c not in pos]
        if missing:
            raise ValueError(f"matrix lacks columns for {selector!r}: {missing[:3]}")
        idx = [pos[c] for c in names]
        return FeatureMatrix(
            X=self.X[:, idx], columns=list(names), y=self.y, task=self.task,
            edition_year=self.edition_year, target_checkpoint=self.target_checkpoint,
            runner_keys=self.runner_keys, selector=selector,
            selector_columns=self.selector_columns, levels=self.levels,
            diagnostics=self.diagnostics)

    def sidecar(self) -> dict:
        mean = self.X.mean(axis=0) if self.n_rows else np.zeros(len(self.columns))
        std = self.X.std(axis=0) if self.n_rows else np.zeros(len(self.columns))
        return {
            "format": "trailcast.features",
            "version": 1,
            "task": self.task,
            "selector": self.selector,
            "columns": list(self.columns),
            "selector_columns": {k: list(v) for k, v in self.selector_columns.items()},
            "levels": self.levels,
            "lag_interaction_fields": list(CHECKPOINT_FIELDS),
            "boolean_coding": "0/1",
            "column_stats": {"mean": mean.tolist(), "std": std.tolist()},
            "diagnostics": self.diagnostics,
        }

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["runner_key", "edition_year", "target_checkpoint", "target", *self.columns])
        target_fmt = (lambda v: str(int(v))) if self.task == "dropout" else (lambda v: repr(float(v)))
        for i in range(self.n_rows):
            w.writerow([self.runner_keys[i], int(self.edition_year[i]),
                        int(self.target_checkpoint[i]), target_fmt(self.y[i]),
                        *(repr(float(v)) for v in self.X[i])])
        return buf.getvalue()

    def save(self, csv_path, sidecar_path=None) -> None:
        csv_path = Path(csv_path)
        sidecar_path = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".json")
        csv_path.write_text(self.to_csv_text(), encoding="utf-8")
        sidecar_path.write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n",
                                encoding="utf-8")

    @classmethod
    def load(cls, csv_path, sidecar_path=None) -> "FeatureMatrix":
        csv_path = Path(csv_path)
        sidecar_path = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".json")
        meta = json.loads(sidecar_path.read_text(encoding="utf-8"))
        with csv_path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header[4:] != meta["columns"]:
            raise ValidationError(f"{csv_path}: header does not match sidecar columns")
        X = np.array([[float(v) for v in r[4:]] for r in body], dtype=np.float64)
        X = X.reshape(len(body), len(meta["columns"]))
        return cls(
            X=X, columns=meta["columns"], y=np.array([float(r[3]) for r in body]),
            task=meta["task"], edition_year=np.array([int(r[1]) for r in body], dtype=np.int64),
            target_checkpoint=np.array([int(r[2]) for r in body], dtype=np.int64),
            runner_keys=[r[0] for r in body], selector=meta["selector"],
            selector_columns=meta["selector_columns"], levels=meta["levels"],
            diagnostics=meta["diagnostics"])


def fit_levels(tables, min_level_count=50) -> dict:
    """One-hot levels. Nationalities seen for fewer than ``min_level_count``
    distinct runners are pooled into ``"other"`` (always listed last)."""
    seen = {c: {} for c in CATEGORICAL}
    for table in tables:
        for i, key in enumerate(table.runner_keys):
            seen["gender"].setdefault(table.gender[i], set()).add(key)
            seen["category"].setdefault(table.category[i], set()).add(key)
            seen["nationality"].setdefault(table.nationality[i], set()).add(key)
    levels = {"gender": sorted(seen["gender"]), "category": sorted(seen["category"])}
    nat = sorted(n for n, keys in seen["nationality"].items() if len(keys) >= min_level_count)
    nat = [n for n in nat if n != OTHER_LEVEL]
    if len(nat) < len(seen["nationality"]):
        nat.append(OTHER_LEVEL)
    levels["nationality"] = nat
    return levels


def one_hot_columns(levels) -> list[str]:
    return [f"{c}={lv}" for c in CATEGORICAL for lv in levels[c]]


def one_hot(values: dict, levels) -> np.ndarray:
    """Indicator vector for one runner; unseen nationalities map to ``other``."""
    out = []
    for c in CATEGORICAL:
        v = values[c]
        if c == "nationality" and v not in levels[c] and OTHER_LEVEL in levels[c]:
            v = OTHER_LEVEL
        out.extend(1.0 if v == lv else 0.0 for lv in levels[c])
    return np.array(out)


def selector_columns(levels) -> dict:
    ckpt = list(CHECKPOINT_FIELDS)
    runner = list(RUNNER_NUMERIC) + one_hot_columns(levels)
    lag1 = lag_columns(depth=1)
    lag2 = [c for c in lag_columns(depth=2) if c not in lag1]
    return {
        SELECTORS[0]: ckpt,
        SELECTORS[1]: ckpt + runner,
        SELECTORS[2]: ckpt + runner + lag1,
        SELECTORS[3]: ckpt + runner + lag1 + lag2,
    }


def runner_block(table: PassageTable, history_index, cutoff, levels, cache=None):
    """Runner features + one-hot for every runner of a table.

    Returns (matrix, ok_mask); runners without qualifying history get
    ``ok_mask = False``.
    """
    n = table.n_runners
    width = len(RUNNER_NUMERIC) + len(one_hot_columns(levels))
    out = np.zeros((n, width))
    ok = np.ones(n, dtype=bool)
    for i, key in enumerate(table.runner_keys):
        ck = (key, cutoff, table.gender[i], table.nationality[i], table.category[i])
        if cache is not None and ck in cache:
            rf = cache[ck]
        else:
            try:
                rf = compute_runner_features(history_index.get(key, ()), cutoff, table.gender[i],
                                             table.nationality[i], table.category[i])
            except EmptyHistoryError:
                rf = None
            if cache is not None:
                cache[ck] = rf
        if rf is None:
            ok[i] = False
            continue
        out[i, :len(RUNNER_NUMERIC)] = rf.values
        out[i, len(RUNNER_NUMERIC):] = one_hot(
            {"gender": rf.gender, "nationality": rf.nationality, "category": rf.category}, levels)
    return out, ok


def edition_instances(table: PassageTable, meta, runner_X, runner_ok, task, min_y="retrospective"):
    """Full-width rows for one edition: (X, y, target_checkpoint, runner_index, diag)."""
    T = table.n_checkpoints
    ckpt_vals = np.vstack([c.feature_values() for c in meta])
    blocks, ys, ks, idxs = [], [], [], []
    diag = {"no_history": 0, "missing_lag": 0}
    for k in range(FIRST_TARGET, T + 1):
        t = k - 1
        Yt = table.Y(t)
        Ytm1 = table.Y(t - 1)
        passed = table.cumulative[:, t - 1] != -1
        has_lags = (Yt > 0) & (Ytm1 > 0)
        if task == "passage_time":
            base = passed & (table.Y(k) > 0)
        else:
            base = passed & (table.D(k) >= 0)
        diag["missing_lag"] += int((base & ~has_lags).sum())
        diag["no_history"] += int((base & has_lags & ~runner_ok).sum())
        rows = np.flatnonzero(base & has_lags & runner_ok)
        if rows.size == 0:
            continue
        mt = segment_minimum(table, t, min_y)[rows]
        mtm1 = segment_minimum(table, t - 1, min_y)[rows]
        x = ckpt_vals[k - 1]
        lags = lag_block(Yt[rows], Ytm1[rows], mt, mtm1, x)
        blocks.append(np.hstack([np.broadcast_to(x, (rows.size, x.size)), runner_X[rows], lags]))
        ys.append(table.Y(k)[rows].astype(np.float64) if task == "passage_time"
                  else table.D(k)[rows].astype(np.float64))
        ks.append(np.full(rows.size, k, dtype=np.int64))
        idxs.append(rows)
    return blocks, ys, ks, idxs, diag


def assemble_design_matrix(tables, meta, history_index, selector=SELECTORS[-1],
                           target="passage_time", min_y="retrospective", levels=None,
                           min_level_count=50) -> FeatureMatrix:
    """Build the design matrix for one task across editions.

    ``tables`` maps edition year to PassageTable (or is a list of them);
    ``meta`` maps edition year to its checkpoints. Runner features use races
    dated strictly before each edition's start date. The returned matrix
    carries the column lists of every selector so ``select`` can narrow it.
    """
    if target not in TASKS:
        raise ValueError(f"target must be one of {TASKS}, got {target!r}")
    if selector not in SELECTORS:
        raise ValueError(f"selector must be one of {SELECTORS}, got {selector!r}")
    if isinstance(tables, dict):
        tables = [tables[y] for y in sorted(tables)]
    levels = levels or fit_levels(tables, min_level_count)
    sel_cols = selector_columns(levels)
    columns = sel_cols[SELECTORS[-1]]
    Xs, ys, ks, years, keys = [], [], [], [], []
    diag = {"no_history": 0, "missing_lag": 0, "rows": 0}
    cache: dict = {}
    for table in sorted(tables, key=lambda tb: tb.edition_year):
        em = meta[table.edition_year]
        if len(em) != table.n_checkpoints:
            raise ValidationError(f"{table.edition_year}: metadata/table checkpoint count mismatch")
        rX, rok = runner_block(table, history_index, em[0].start_date, levels, cache)
        b, y, k, idx, d = edition_instances(table, em, rX, rok, target, min_y)
        for key in ("no_history", "missing_lag"):
            diag[key] += d[key]
        for bi, yi, ki, ii in zip(b, y, k, idx):
            Xs.append(bi)
            ys.append(yi)
            ks.append(ki)
            years.append(np.full(ii.size, table.edition_year, dtype=np.int64))
            keys.extend(table.runner_keys[j] for j in ii)
    X = np.vstack(Xs) if Xs else np.zeros((0, len(columns)))
    diag["rows"] = int(X.shape[0])
    fm = FeatureMatrix(
        X=np.ascontiguousarray(X), columns=list(columns),
        y=np.concatenate(ys) if ys else np.zeros(0), task=target,
        edition_year=np.concatenate(years) if years else np.zeros(0, dtype=np.int64),
        target_checkpoint=np.concatenate(ks) if ks else np.zeros(0, dtype=np.int64),
        runner_keys=keys, selector=SELECTORS[-1], selector_columns=sel_cols, levels=levels,
        diagnostics={**diag, "min_y_mode": min_y})
    return fm if selector == SELECTORS[-1] else fm.select(selector)
