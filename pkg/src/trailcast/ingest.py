"""Input parsing, runner matching, and segment time / dropout derivation.

Three CSV inputs (UTF-8, comma-delimited, header required):

``race_history.csv``
    One row per runner per past race; see ``RACE_HISTORY_COLUMNS``.
``checkpoint_meta.csv``
    One row per (edition, canonical checkpoint); see ``CHECKPOINT_COLUMNS``.
``results_<year>.csv``
    One row per checkpoint scan; see ``RESULTS_COLUMNS``.

Times are integer seconds throughout.
"""
from __future__ import annotations

import csv
import datetime as dt
import re
import sys
import unicodedata
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import SchemaError, ValidationError

RACE_HISTORY_COLUMNS = (
    "name", "nationality", "category", "race_id", "race_date", "distance_km",
    "elevation_gain_m", "rank", "n_participants", "finish_time_s", "first_time_s",
    "last_time_s", "n_female",
)
NUMERIC_CHECKPOINT_FIELDS = (
    "inner_dist_km", "cum_dist_km", "altitude_m", "cumul_plus_m", "cumul_minus_m",
    "var_plus_m", "var_minus_m",
)
BOOLEAN_CHECKPOINT_FIELDS = (
    "time_barrier", "drink", "food", "foodx2", "bed", "change_clothes", "medical", "bus", "wc",
)
CHECKPOINT_FIELDS = NUMERIC_CHECKPOINT_FIELDS + BOOLEAN_CHECKPOINT_FIELDS
CHECKPOINT_COLUMNS = (
    ("edition_year", "start_date", "canonical_index", "name")
    + CHECKPOINT_FIELDS + ("rerouted",)
)
RESULTS_COLUMNS = ("name", "nationality", "gender", "category", "checkpoint", "cumulative_time_s")

MISSING = -1
VAR_TOL = 1e-6
_RESULTS_NAME = re.compile(r"results_(\d{4})\.csv$")


# --- generic CSV plumbing -------------------------------------------------

@dataclass
class ParseResult:
    path: str
    records: list
    rejected: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_accepted(self) -> int:
        return len(self.records)

    @property
    def n_rejected(self) -> int:
        return len(self.rejected)


def emit_rejections(result: ParseResult, stream=None) -> None:
    stream = sys.stderr if stream is None else stream
    for line, reason in result.rejected:
        print(f"{result.path}:{line}: rejected: {reason}", file=stream)


def _read_rows(path, columns):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != tuple(columns):
            raise SchemaError(
                f"{path}:1: header {header!r} does not match expected {list(columns)!r}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            yield reader.line_num, row


def _int_field(value, name):
    v = value.strip()
    try:
        return int(v)
    except ValueError:
        pass
    try:
        f = float(v)
    except ValueError:
        raise ValueError(f"malformed {name}: {value!r}") from None
    if not np.isfinite(f) or f != int(f):
        raise ValueError(f"malformed {name}: {value!r} (integer expected)")
    return int(f)


def _float_field(value, name):
    try:
        f = float(value.strip())
    except ValueError:
        raise ValueError(f"malformed {name}: {value!r}") from None
    if not np.isfinite(f):
        raise ValueError(f"malformed {name}: {value!r}")
    return f


def _bool_field(value, name):
    v = value.strip().lower()
    if v in ("1", "true", "yes", "y", "t"):
        return True
    if v in ("0", "false", "no", "n", "f", ""):
        return False
    raise ValueError(f"malformed {name}: {value!r}")


def _date_field(value, name):
    try:
        return dt.date.fromisoformat(value.strip())
    except ValueError:
        raise ValueError(f"malformed {name}: {value!r} (YYYY-MM-DD expected)") from None


# --- runner matching ------------------------------------------------------

def normalize_name(name: str) -> str:
    """Lowercase, strip diacritics, collapse whitespace."""
    folded = unicodedata.normalize("NFKD", name)
    folded = "".join(c for c in folded if not unicodedata.combining(c))
    return " ".join(folded.lower().split())


def runner_key(name: str, nationality: str, category: str | None = None) -> str:
    """Matching key: normalized name and nationality, optionally the age category."""
    if not name or not name.strip():
        raise ValueError("runner name must be non-empty")
    parts = [normalize_name(name), normalize_name(nationality)]
    if category is not None:
        parts.append(normalize_name(category))
    return "|".join(parts)


# --- race history ---------------------------------------------------------

@dataclass(frozen=True)
class RaceHistoryEntry:
    runner_key: str
    race_id: str
    race_date: dt.date
    distance_km: float
    elevation_gain_m: float
    rank: int
    n_participants: int
    finish_time_s: int
    first_time_s: int
    last_time_s: int
    n_female: int


def _history_entry(row, match_on_category):
    d = dict(zip(RACE_HISTORY_COLUMNS, row))
    if len(row) != len(RACE_HISTORY_COLUMNS):
        raise ValueError(f"expected {len(RACE_HISTORY_COLUMNS)} fields, got {len(row)}")
    if not d["name"].strip():
        raise ValueError("empty name")
    e = RaceHistoryEntry(
        runner_key=runner_key(d["name"], d["nationality"],
                              d["category"] if match_on_category else None),
        race_id=d["race_id"].strip(),
        race_date=_date_field(d["race_date"], "race_date"),
        distance_km=_float_field(d["distance_km"], "distance_km"),
        elevation_gain_m=_float_field(d["elevation_gain_m"], "elevation_gain_m"),
        rank=_int_field(d["rank"], "rank"),
        n_participants=_int_field(d["n_participants"], "n_participants"),
        finish_time_s=_int_field(d["finish_time_s"], "finish_time_s"),
        first_time_s=_int_field(d["first_time_s"], "first_time_s"),
        last_time_s=_int_field(d["last_time_s"], "last_time_s"),
        n_female=_int_field(d["n_female"], "n_female"),
    )
    if e.distance_km < 0 or e.elevation_gain_m < 0:
        raise ValueError("distance and elevation must be non-negative")
    if e.rank < 1 or e.n_participants < 1:
        raise ValueError("rank and n_participants must be positive")
    if e.rank > e.n_participants:
        raise ValueError(f"rank {e.rank} > n_participants {e.n_participants}")
    if e.first_time_s <= 0 or not e.first_time_s <= e.finish_time_s <= e.last_time_s:
        raise ValueError("times must satisfy 0 < first <= finish <= last")
    if not 0 <= e.n_female <= e.n_participants:
        raise ValueError(f"n_female {e.n_female} outside [0, n_participants]")
    return e


def parse_race_history(path, match_on_category=False, diagnostics=None) -> ParseResult:
    """Parse ``race_history.csv``; invalid rows are rejected with line numbers."""
    result = ParseResult(str(path), [])
    for line, row in _read_rows(path, RACE_HISTORY_COLUMNS):
        try:
            result.records.append(_history_entry(row, match_on_category))
        except ValueError as exc:
            result.rejected.append((line, str(exc)))
    if diagnostics is not False:
        emit_rejections(result, diagnostics)
    return result


def build_history_index(entries) -> dict[str, list[RaceHistoryEntry]]:
    """Group entries by runner key, each list ordered by (date, race id).

    Distinct people sharing a key end up in one aggregated history.
    """
    index: dict[str, list[RaceHistoryEntry]] = {}
    for e in entries:
        index.setdefault(e.runner_key, []).append(e)
    for lst in index.values():
        lst.sort(key=lambda e: (e.race_date, e.race_id))
    return index


def match_runner(name, nationality, history_index, category=None):
    """Return the history key for a runner, or None when absent."""
    key = runner_key(name, nationality, category)
    return key if key in history_index else None


# --- checkpoint metadata --------------------------------------------------

@dataclass(frozen=True)
class CheckpointMeta:
    edition_year: int
    start_date: dt.date
    canonical_index: int
    name: str
    inner_dist_km: float
    cum_dist_km: float
    altitude_m: float
    cumul_plus_m: float
    cumul_minus_m: float
    var_plus_m: float
    var_minus_m: float
    time_barrier: bool
    drink: bool
    food: bool
    foodx2: bool
    bed: bool
    change_clothes: bool
    medical: bool
    bus: bool
    wc: bool
    rerouted: bool = False

    def feature_values(self) -> np.ndarray:
        """The sixteen checkpoint fields as floats (booleans coded 0/1)."""
        return np.array([float(getattr(self, f)) for f in CHECKPOINT_FIELDS])


def validate_edition(checkpoints: list[CheckpointMeta]) -> list[str]:
    problems = []
    if not checkpoints:
        return ["edition without checkpoints"]
    year = checkpoints[0].edition_year
    idx = [c.canonical_index for c in checkpoints]
    if idx != list(range(1, len(idx) + 1)):
        problems.append(f"{year}: canonical indices must be 1..T without gaps, got {idx}")
    if len({c.start_date for c in checkpoints}) != 1:
        problems.append(f"{year}: start_date differs between rows")
    prev = None
    for c in checkpoints:
        pp = prev.cumul_plus_m if prev else 0.0
        pm = prev.cumul_minus_m if prev else 0.0
        if prev is not None:
            if not c.cum_dist_km > prev.cum_dist_km:
                problems.append(f"{year}/{c.canonical_index}: cum_dist_km not strictly increasing")
        if c.cumul_plus_m < pp or c.cumul_minus_m < pm:
            problems.append(f"{year}/{c.canonical_index}: cumulative climb/descent decreases")
        if abs(c.var_plus_m - (c.cumul_plus_m - pp)) > VAR_TOL:
            problems.append(f"{year}/{c.canonical_index}: var_plus_m != cumul_plus_m step")
        if abs(c.var_minus_m - (c.cumul_minus_m - pm)) > VAR_TOL:
            problems.append(f"{year}/{c.canonical_index}: var_minus_m != cumul_minus_m step")
        prev = c
    return problems


def check_alignment(meta: dict[int, list[CheckpointMeta]], tol_km=1e-6) -> list[str]:
    """Editions sharing a canonical index must agree on cum_dist_km unless the
    checkpoint is flagged as rerouted in either edition."""
    problems = []
    years = sorted(meta)
    for a_i, a in enumerate(years):
        for b in years[a_i + 1:]:
            for ca, cb in zip(meta[a], meta[b]):
                if ca.rerouted or cb.rerouted:
                    continue
                if abs(ca.cum_dist_km - cb.cum_dist_km) > tol_km:
                    problems.append(
                        f"checkpoint {ca.canonical_index}: cum_dist_km {ca.cum_dist_km} ({a}) vs "
                        f"{cb.cum_dist_km} ({b}) without rerouted flag")
    return problems


def parse_checkpoint_meta(path, alignment_tol_km=1e-6) -> dict[int, list[CheckpointMeta]]:
    """Parse ``checkpoint_meta.csv`` into {year: checkpoints ordered by index}.

    Unlike the runner files, any bad row is fatal: the course description must
    be complete.
    """
    by_year: dict[int, list[CheckpointMeta]] = {}
    for line, row in _read_rows(path, CHECKPOINT_COLUMNS):
        if len(row) != len(CHECKPOINT_COLUMNS):
            raise ValidationError(f"{path}:{line}: expected {len(CHECKPOINT_COLUMNS)} fields")
        d = dict(zip(CHECKPOINT_COLUMNS, row))
        try:
            kw = {f: _float_field(d[f], f) for f in NUMERIC_CHECKPOINT_FIELDS}
            kw.update({f: _bool_field(d[f], f) for f in BOOLEAN_CHECKPOINT_FIELDS})
            cp = CheckpointMeta(
                edition_year=_int_field(d["edition_year"], "edition_year"),
                start_date=_date_field(d["start_date"], "start_date"),
                canonical_index=_int_field(d["canonical_index"], "canonical_index"),
                name=d["name"].strip(), rerouted=_bool_field(d["rerouted"], "rerouted"), **kw)
        except ValueError as exc:
            raise ValidationError(f"{path}:{line}: {exc}") from None
        by_year.setdefault(cp.edition_year, []).append(cp)
    problems = []
    for year in sorted(by_year):
        by_year[year].sort(key=lambda c: c.canonical_index)
        problems += validate_edition(by_year[year])
    problems += check_alignment(by_year, alignment_tol_km)
    if problems:
        raise ValidationError(f"{path}: " + "; ".join(problems))
    return dict(sorted(by_year.items()))


# --- per-edition results --------------------------------------------------

@dataclass(frozen=True)
class ResultRow:
    name: str
    nationality: str
    gender: str
    category: str
    checkpoint: int
    cumulative_time_s: int
    line: int


@dataclass(frozen=True)
class PassageRecord:
    runner_key: str
    edition_year: int
    checkpoint: int
    cumulative_time_s: int


def results_year(path) -> int:
    m = _RESULTS_NAME.search(Path(path).name)
    if not m:
        raise ValidationError(f"{path}: results file name must look like results_<year>.csv")
    return int(m.group(1))


def parse_results(path, diagnostics=None) -> ParseResult:
    """Parse ``results_<year>.csv`` scan rows."""
    result = ParseResult(str(path), [])
    for line, row in _read_rows(path, RESULTS_COLUMNS):
        try:
            if len(row) != len(RESULTS_COLUMNS):
                raise ValueError(f"expected {len(RESULTS_COLUMNS)} fields, got {len(row)}")
            d = dict(zip(RESULTS_COLUMNS, row))
            if not d["name"].strip():
                raise ValueError("empty name")
            cp = _int_field(d["checkpoint"], "checkpoint")
            t = _int_field(d["cumulative_time_s"], "cumulative_time_s")
            if cp < 1:
                raise ValueError(f"checkpoint index {cp} < 1")
            if t <= 0:
                raise ValueError("cumulative_time_s must be positive")
            result.records.append(ResultRow(
                name=d["name"].strip(), nationality=d["nationality"].strip(),
                gender=d["gender"].strip(), category=d["category"].strip(),
                checkpoint=cp, cumulative_time_s=t, line=line))
        except ValueError as exc:
            result.rejected.append((line, str(exc)))
    if diagnostics is not False:
        emit_rejections(result, diagnostics)
    return result


# --- passage tables -------------------------------------------------------

@dataclass
class PassageTable:
    """Per-edition segment times and dropout labels.

    Arrays are (n_runners, T); column ``t - 1`` holds checkpoint ``t``.
    ``cumulative``/``passage`` use ``MISSING`` (-1) where undefined, ``dropout``
    uses -1 for "not at risk".
    """

    edition_year: int
    n_checkpoints: int
    runner_keys: list[str]
    gender: list[str]
    nationality: list[str]
    category: list[str]
    cumulative: np.ndarray
    passage: np.ndarray
    dropout: np.ndarray

    @property
    def n_runners(self) -> int:
        return len(self.runner_keys)

    def Y(self, t: int) -> np.ndarray:
        return self.passage[:, t - 1]

    def D(self, t: int) -> np.ndarray:
        return self.dropout[:, t - 1]

    def last_checkpoint(self) -> np.ndarray:
        seen = self.cumulative != MISSING
        idx = np.where(seen.any(axis=1), self.n_checkpoints - np.argmax(seen[:, ::-1], axis=1), 0)
        return idx.astype(np.int64)

    def finishers(self) -> np.ndarray:
        return self.last_checkpoint() == self.n_checkpoints

    def subset(self, mask) -> "PassageTable":
        mask = np.asarray(mask, dtype=bool)
        pick = [i for i in range(self.n_runners) if mask[i]]
        return replace(
            self, runner_keys=[self.runner_keys[i] for i in pick],
            gender=[self.gender[i] for i in pick], nationality=[self.nationality[i] for i in pick],
            category=[self.category[i] for i in pick], cumulative=self.cumulative[mask],
            passage=self.passage[mask], dropout=self.dropout[mask])


@dataclass
class RunnerInfo:
    gender: str
    nationality: str
    category: str


def passage_from_cumulative(cumulative) -> np.ndarray:
    """Segment times; undefined (``MISSING``) wherever either end is unscanned."""
    cumulative = np.asarray(cumulative, dtype=np.int64)
    n = cumulative.shape[0]
    prev = np.column_stack([np.zeros(n, dtype=np.int64), cumulative[:, :-1]])
    defined = (cumulative != MISSING) & (prev != MISSING)
    return np.where(defined, cumulative - prev, MISSING).astype(np.int64)


def derive_passage_times(records, n_checkpoints, edition_year, demographics=None):
    """Segment times from cumulative scan times.

    ``Y[t] = cumulative(t) - cumulative(t - 1)`` with ``cumulative(0) = 0``; a
    segment following a missed scan is left undefined. Runners whose cumulative
    times are not strictly increasing (or who have duplicate or out-of-range
    scans) are rejected.

    Returns ``(table, rejected)`` where ``rejected`` lists (runner_key, reason).
    """
    demographics = demographics or {}
    by_runner: dict[str, dict[int, int]] = {}
    rejected: list[tuple[str, str]] = []
    bad: set[str] = set()
    for r in records:
        scans = by_runner.setdefault(r.runner_key, {})
        if r.runner_key in bad:
            continue
        if not 1 <= r.checkpoint <= n_checkpoints:
            bad.add(r.runner_key)
            rejected.append((r.runner_key, f"checkpoint {r.checkpoint} outside 1..{n_checkpoints}"))
        elif r.checkpoint in scans:
            bad.add(r.runner_key)
            rejected.append((r.runner_key, f"duplicate scan at checkpoint {r.checkpoint}"))
        else:
            scans[r.checkpoint] = int(r.cumulative_time_s)
    keys = []
    rows = []
    for key in sorted(by_runner):
        if key in bad:
            continue
        scans = by_runner[key]
        cps = sorted(scans)
        times = [scans[c] for c in cps]
        if any(b <= a for a, b in zip(times, times[1:])) or times[0] <= 0:
            rejected.append((key, "cumulative times not strictly increasing"))
            continue
        keys.append(key)
        rows.append(scans)
    n = len(keys)
    cumulative = np.full((n, n_checkpoints), MISSING, dtype=np.int64)
    for i, scans in enumerate(rows):
        for c, t in scans.items():
            cumulative[i, c - 1] = t
    passage = passage_from_cumulative(cumulative)
    info = [demographics.get(k, RunnerInfo("", "", "")) for k in keys]
    table = PassageTable(
        edition_year=int(edition_year), n_checkpoints=int(n_checkpoints), runner_keys=keys,
        gender=[d.gender for d in info], nationality=[d.nationality for d in info],
        category=[d.category for d in info], cumulative=cumulative, passage=passage,
        dropout=np.full((n, n_checkpoints), -1, dtype=np.int8))
    return table, rejected


def derive_dropout_labels(table: PassageTable, meta=None) -> PassageTable:
    """Fill ``D``: 0 up to the last scanned checkpoint L, 1 at L + 1 when
    L < T, undefined beyond. A missed scan followed by later scans is not a
    dropout. ``meta`` (the edition's checkpoints) fixes T when given.
    """
    T = len(meta) if meta is not None else table.n_checkpoints
    if T != table.n_checkpoints:
        raise ValidationError(
            f"{table.edition_year}: table has {table.n_checkpoints} checkpoints, metadata {T}")
    last = table.last_checkpoint()
    cols = np.arange(1, T + 1)[None, :]
    d = np.full(table.dropout.shape, -1, dtype=np.int8)
    d[cols <= last[:, None]] = 0
    d[(cols == last[:, None] + 1) & (last[:, None] >= 1)] = 1
    return replace(table, dropout=d)


# --- whole-pipeline helper ------------------------------------------------

@dataclass
class IngestResult:
    history: dict[str, list[RaceHistoryEntry]]
    meta: dict[int, list[CheckpointMeta]]
    tables: dict[int, PassageTable]
    diagnostics: dict


def ingest(history_path, meta_path, results_paths, match_on_category=False,
           diagnostics=None) -> IngestResult:
    """Parse all inputs, drop runners absent from the history, build tables."""
    stream = sys.stderr if diagnostics is None else diagnostics
    hist = parse_race_history(history_path, match_on_category, diagnostics=stream)
    index = build_history_index(hist.records)
    meta = parse_checkpoint_meta(meta_path)
    diag = {
        "race_history": {"accepted": hist.n_accepted, "rejected": hist.n_rejected},
        "editions": {},
    }
    tables = {}
    for path in sorted(results_paths, key=lambda p: results_year(p)):
        year = results_year(path)
        if year not in meta:
            raise ValidationError(f"{path}: no checkpoint metadata for edition {year}")
        res = parse_results(path, diagnostics=stream)
        records, demo, unmatched = [], {}, set()
        for r in res.records:
            key = runner_key(r.name, r.nationality, r.category if match_on_category else None)
            if key not in index:
                unmatched.add(key)
                continue
            demo.setdefault(key, RunnerInfo(r.gender, r.nationality, r.category))
            records.append(PassageRecord(key, year, r.checkpoint, r.cumulative_time_s))
        for key in sorted(unmatched):
            print(f"{path}: unmatched runner {key!r} dropped", file=stream)
        table, bad = derive_passage_times(records, len(meta[year]), year, demo)
        for key, reason in bad:
            print(f"{path}: runner {key!r} rejected: {reason}", file=stream)
        table = derive_dropout_labels(table, meta[year])
        tables[year] = table
        diag["editions"][str(year)] = {
            "rows_accepted": res.n_accepted,
            "rows_rejected": res.n_rejected,
            "runners_unmatched": len(unmatched),
            "runners_rejected": len(bad),
            "runners": table.n_runners,
            "finishers": int(table.finishers().sum()),
        }
    return IngestResult(history=index, meta=meta, tables=tables, diagnostics=diag)


# --- persisted tables -----------------------------------------------------

PASSAGE_PREFIX = ("runner_key", "gender", "nationality", "category")


def write_passages(table: PassageTable, path) -> None:
    """One row per runner: demographics then cumulative seconds per checkpoint
    (empty where unscanned). Passage times and dropout labels are re-derived
    on load."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*PASSAGE_PREFIX, *(f"cum_{t}" for t in range(1, table.n_checkpoints + 1))])
        for i, key in enumerate(table.runner_keys):
            cum = ["" if v == MISSING else str(int(v)) for v in table.cumulative[i]]
            w.writerow([key, table.gender[i], table.nationality[i], table.category[i], *cum])


def read_passages(path, edition_year) -> PassageTable:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0][:4]) != PASSAGE_PREFIX:
        raise SchemaError(f"{path}:1: not a passages file")
    T = len(rows[0]) - len(PASSAGE_PREFIX)
    body = rows[1:]
    cum = np.full((len(body), T), MISSING, dtype=np.int64)
    for i, r in enumerate(body):
        if len(r) != T + 4:
            raise SchemaError(f"{path}:{i + 2}: expected {T + 4} fields, got {len(r)}")
        for t, v in enumerate(r[4:]):
            if v:
                try:
                    cum[i, t] = _int_field(v, f"cum_{t + 1}")
                except ValueError as exc:
                    raise SchemaError(f"{path}:{i + 2}: {exc}") from None
    table = PassageTable(
        edition_year=int(edition_year), n_checkpoints=T, runner_keys=[r[0] for r in body],
        gender=[r[1] for r in body], nationality=[r[2] for r in body],
        category=[r[3] for r in body], cumulative=cum, passage=passage_from_cumulative(cum),
        dropout=np.full((len(body), T), -1, dtype=np.int8))
    return derive_dropout_labels(table)
