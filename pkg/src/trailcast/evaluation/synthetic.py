"""Seeded synthetic race editions with known ground truth.

Segment time for runner i at checkpoint t::

    Y[i, t] = round(ability_i * difficulty_t * exp(noise_scale * eps))

with difficulty proportional to the segment's km-effort. Dropout is a discrete
hazard applied before each checkpoint from the second one on. A runner who
passed ``t - 1`` fails to reach ``t`` with probability ``2 * sigmoid(eta) - 1``
where::

    r[t]  = log(Y[t] / median Y[t])
    w[t]  = (effort(t) / mean effort) ** effort_power
    eta   = w[t] * (fatigue * cum_dist(t) / total_dist
                    + slowness * max(0, r[t-1])
                    + slowdown * max(0, r[t-1] - r[t-2]) ** 2)

``effort`` is the km-effort of the segment ending at ``t``, so harder
segments scale every runner's hazard up (``effort_power = 0`` switches this
off). Each median runs over the runners still in the race when the hazard is
applied. With all coefficients 0 the hazard is exactly 0.
"""
from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..ingest import (
    CHECKPOINT_COLUMNS, RACE_HISTORY_COLUMNS, RESULTS_COLUMNS, CheckpointMeta, RaceHistoryEntry,
    RunnerInfo, derive_dropout_labels, derive_passage_times, PassageRecord, runner_key,
)

NATIONALITIES = ("FRA", "ITA", "ESP", "GBR", "USA", "JPN", "CHE", "NOR", "ARG", "NPL")
NATIONALITY_WEIGHTS = (0.35, 0.2, 0.15, 0.1, 0.08, 0.05, 0.04, 0.015, 0.01, 0.005)
CATEGORIES = ("SE", "V1", "V2", "V3")
CATEGORY_WEIGHTS = (0.35, 0.42, 0.18, 0.05)


@dataclass
class SyntheticRaceSpec:
    n_runners: int = 200
    n_checkpoints: int = 10
    years: tuple = (2015, 2016, 2017)
    seconds_per_effort: float = 540.0  # per km-effort unit, for ability 1
    ability_sigma: float = 0.25
    noise_scale: float = 0.08
    fatigue: float = 0.0
    slowness: float = 0.0
    slowdown: float = 0.0
    effort_power: float = 0.0
    n_history_mean: float = 5.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_runners < 1 or self.n_checkpoints < 3:
            raise ValueError("need at least 1 runner and 3 checkpoints")
        if not self.years or len(set(self.years)) != len(self.years):
            raise ValueError("years must be a non-empty list of distinct editions")
        for name in ("seconds_per_effort",):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("ability_sigma", "noise_scale", "fatigue", "slowness", "slowdown",
                     "effort_power", "n_history_mean"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative")


@dataclass
class SyntheticRace:
    spec: SyntheticRaceSpec
    meta: dict                      # year -> list[CheckpointMeta]
    tables: dict                    # year -> PassageTable
    history: list                   # RaceHistoryEntry
    names: dict                     # runner_key -> (name, nationality, gender, category)
    truth: dict = field(default_factory=dict)

    def history_index(self):
        from ..ingest import build_history_index
        return build_history_index(self.history)


def hazard(eta):
    """Map a non-negative score to a probability in [0, 1) with hazard(0) = 0."""
    return 2.0 / (1.0 + np.exp(-np.asarray(eta, dtype=np.float64))) - 1.0


def make_course(n_checkpoints, rng, year, start_date):
    inner = np.round(rng.uniform(5.0, 15.0, n_checkpoints), 1)
    vplus = np.round(rng.uniform(0.0, 1200.0, n_checkpoints))
    vminus = np.round(rng.uniform(0.0, 1200.0, n_checkpoints))
    flags = rng.random((n_checkpoints, 9)) < np.array([0.3, 0.8, 0.6, 0.2, 0.1, 0.15, 0.4, 0.3, 0.5])
    alt = 1000.0
    cps = []
    cum, cp, cm = 0.0, 0.0, 0.0
    for t in range(n_checkpoints):
        cum = round(cum + inner[t], 1)
        cp += vplus[t]
        cm += vminus[t]
        alt = alt + vplus[t] - vminus[t]
        f = flags[t]
        cps.append(CheckpointMeta(
            edition_year=year, start_date=start_date, canonical_index=t + 1, name=f"CP{t + 1}",
            inner_dist_km=float(inner[t]), cum_dist_km=float(cum), altitude_m=float(alt),
            cumul_plus_m=float(cp), cumul_minus_m=float(cm), var_plus_m=float(vplus[t]),
            var_minus_m=float(vminus[t]), time_barrier=bool(f[0]), drink=bool(f[1]),
            food=bool(f[2]), foodx2=bool(f[3]), bed=bool(f[4]), change_clothes=bool(f[5]),
            medical=bool(f[6]), bus=bool(f[7]), wc=bool(f[8])))
    return cps


def _history_for(key, ability, rng, start_date, n_mean):
    """Past races whose relative placings track the runner's ability."""
    n = 1 + rng.poisson(n_mean)
    out = []
    for j in range(n):
        days = int(rng.integers(20, 6 * 365))
        date = start_date - dt.timedelta(days=days)
        dist = float(np.round(rng.uniform(10, 170), 1))
        elev = float(np.round(dist * rng.uniform(20, 70)))
        npart = int(rng.integers(50, 2500))
        rel = float(np.clip(0.5 + 1.2 * np.log(ability) + rng.normal(0, 0.12), 0.0, 1.0))
        rank = int(np.clip(round(rel * npart), 1, npart))
        first = int(round(dist * 360 + elev * 0.9 + 600))
        last = int(round(first * rng.uniform(2.0, 3.0)))
        finish = int(round(first + (last - first) * rel))
        out.append(RaceHistoryEntry(
            runner_key=key, race_id=f"R{date.isoformat()}-{j}", race_date=date, distance_km=dist,
            elevation_gain_m=elev, rank=rank, n_participants=npart, finish_time_s=finish,
            first_time_s=first, last_time_s=last, n_female=int(rng.integers(0, npart // 3 + 1))))
    # one race on/after the start date to exercise the cutoff filter
    out.append(RaceHistoryEntry(
        runner_key=key, race_id=f"R{start_date.isoformat()}-future", race_date=start_date
        + dt.timedelta(days=int(rng.integers(0, 60))), distance_km=50.0, elevation_gain_m=3000.0,
        rank=1, n_participants=10, finish_time_s=30000, first_time_s=30000,
        last_time_s=40000, n_female=2))
    return out


def simulate_edition(abilities, course, spec, rng):
    """Cumulative scan times (with -1 after dropout), segment times and hazards."""
    n = abilities.size
    T = len(course)
    effort = np.array([c.inner_dist_km + c.var_plus_m / 100.0 for c in course])
    difficulty = spec.seconds_per_effort * effort
    eps = rng.standard_normal((n, T))
    Y = np.round(abilities[:, None] * difficulty[None, :] * np.exp(spec.noise_scale * eps))
    Y = np.maximum(Y, 1.0).astype(np.int64)
    total = course[-1].cum_dist_km
    weight = (effort / effort.mean()) ** spec.effort_power
    alive = np.ones(n, dtype=bool)
    reached = np.zeros((n, T), dtype=bool)
    reached[:, 0] = True
    hazards = np.zeros((n, T))
    u = rng.random((n, T))
    rel_prev = None
    for t in range(1, T):
        # runners at checkpoint t (0-based t-1 passed) try to reach t
        at = alive & reached[:, t - 1]
        y_prev = Y[:, t - 1].astype(np.float64)
        rel = np.zeros(n)
        if at.any():
            # pace against the segment median: a min-based reference would let
            # one very fast runner shift every hazard of the checkpoint at once
            rel[at] = np.log(y_prev[at] / np.median(y_prev[at]))
        drop_rel = np.zeros(n)
        if rel_prev is not None:
            drop_rel = np.maximum(0.0, rel - rel_prev) ** 2
        eta = (spec.fatigue * course[t].cum_dist_km / total + spec.slowness * np.maximum(rel, 0.0)
               + spec.slowdown * drop_rel) * weight[t]
        h = np.where(at, hazard(eta), 0.0)
        hazards[:, t] = h
        dropped = at & (u[:, t] < h)
        alive &= ~dropped
        reached[:, t] = at & ~dropped
        rel_prev = rel
    cum = np.cumsum(Y, axis=1)
    cum = np.where(reached, cum, -1)
    return cum, Y, hazards


def generate_synthetic(spec: SyntheticRaceSpec) -> SyntheticRace:
    """Draw course, runners, histories and results for every edition."""
    spec.validate()
    root = np.random.SeedSequence(spec.seed)
    course_rng = np.random.default_rng(root.spawn(1)[0])
    first_year = min(spec.years)
    base_course = make_course(spec.n_checkpoints, course_rng, first_year,
                              dt.date(first_year, 8, 28))
    meta, tables, history, names = {}, {}, [], {}
    truth = {"abilities": {}, "hazards": {}, "segments": {}}
    for year, ss in zip(spec.years, root.spawn(len(spec.years))):
        rng = np.random.default_rng(ss)
        start = dt.date(year, 8, 28)
        meta[year] = [CheckpointMeta(**{**c.__dict__, "edition_year": year, "start_date": start})
                      for c in base_course]
        n = spec.n_runners
        abilities = np.exp(spec.ability_sigma * rng.standard_normal(n))
        nat = rng.choice(len(NATIONALITIES), n, p=NATIONALITY_WEIGHTS)
        cat = rng.choice(len(CATEGORIES), n, p=CATEGORY_WEIGHTS)
        gender = np.where(rng.random(n) < 0.15, "F", "M")
        cum, Y, hz = simulate_edition(abilities, meta[year], spec, rng)
        records, demo = [], {}
        for i in range(n):
            name = f"Runner {year}-{i:05d}"
            nationality = NATIONALITIES[nat[i]]
            key = runner_key(name, nationality)
            names[key] = (name, nationality, str(gender[i]), CATEGORIES[cat[i]])
            demo[key] = RunnerInfo(str(gender[i]), nationality, CATEGORIES[cat[i]])
            history.extend(_history_for(key, abilities[i], rng, start, spec.n_history_mean))
            for t in range(spec.n_checkpoints):
                if cum[i, t] > 0:
                    records.append(PassageRecord(key, year, t + 1, int(cum[i, t])))
        table, rejected = derive_passage_times(records, spec.n_checkpoints, year, demo)
        assert not rejected
        tables[year] = derive_dropout_labels(table, meta[year])
        keys = [runner_key(f"Runner {year}-{i:05d}", NATIONALITIES[nat[i]]) for i in range(n)]
        order = np.argsort(keys, kind="stable")  # table rows are sorted by key
        truth["abilities"][year] = abilities[order]
        truth["hazards"][year] = hz[order]
        truth["segments"][year] = Y[order]
    return SyntheticRace(spec=spec, meta=meta, tables=tables, history=history, names=names,
                         truth=truth)


def write_inputs(race: SyntheticRace, directory) -> dict:
    """Write the three CSV inputs; returns their paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    hist_path = d / "race_history.csv"
    with hist_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RACE_HISTORY_COLUMNS)
        for e in sorted(race.history, key=lambda e: (e.runner_key, e.race_date, e.race_id)):
            name, nat, _, cat = race.names[e.runner_key]
            w.writerow([name, nat, cat, e.race_id, e.race_date.isoformat(), repr(e.distance_km),
                        repr(e.elevation_gain_m), e.rank, e.n_participants, e.finish_time_s,
                        e.first_time_s, e.last_time_s, e.n_female])
    meta_path = d / "checkpoint_meta.csv"
    with meta_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CHECKPOINT_COLUMNS)
        for year in sorted(race.meta):
            for c in race.meta[year]:
                row = []
                for col in CHECKPOINT_COLUMNS:
                    v = getattr(c, col)
                    if isinstance(v, bool):
                        v = int(v)
                    elif isinstance(v, dt.date):
                        v = v.isoformat()
                    elif isinstance(v, float):
                        v = repr(v)
                    row.append(v)
                w.writerow(row)
    results = []
    for year in sorted(race.tables):
        table = race.tables[year]
        path = d / f"results_{year}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RESULTS_COLUMNS)
            for i, key in enumerate(table.runner_keys):
                name, nat, gender, cat = race.names[key]
                for t in range(table.n_checkpoints):
                    c = table.cumulative[i, t]
                    if c > 0:
                        w.writerow([name, nat, gender, cat, t + 1, int(c)])
        results.append(str(path))
    return {"race_history": str(hist_path), "checkpoint_meta": str(meta_path), "results": results}
