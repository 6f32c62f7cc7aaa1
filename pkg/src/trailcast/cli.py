"""Command-line entry point: ``trailcast <subcommand> CONFIG``.

Every stage reads a JSON run config and writes one directory under the
config's ``output_dir``::

    ingest/    passages_<year>.csv, diagnostics.json
    features/  <task>.csv + <task>.json sidecar
    cv/        overall.csv, per_checkpoint.csv, roc.csv, coverage.csv,
               importance.csv, runs.csv, predictions.csv, summary.json,
               models/<task>__<model>__<selector>.json
    report/    summary.txt
    predict/   predictions.csv

Stage directories are built in a temporary sibling and renamed into place.
Each holds a verbatim copy of the config (``config.json``) and a
``manifest.json`` of sha256 hashes. Nothing depends on wall-clock time.

Exit status: 0 success, 1 invalid input, 2 internal error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .evaluation.cv import MODELS, GridReport, fit_model, format_value, make_loyo_splits, run_grid
from .evaluation.synthetic import SyntheticRaceSpec, generate_synthetic, write_inputs
from .features import (
    CATEGORICAL, MIN_Y_MODES, SELECTORS, TASKS, FeatureMatrix, assemble_design_matrix,
    compute_runner_features, lag_block, one_hot, segment_minimum, selector_columns,
)
from .ingest import (
    PassageRecord, RunnerInfo, build_history_index, derive_dropout_labels, derive_passage_times,
    ingest, parse_checkpoint_meta, parse_race_history, parse_results, read_passages, runner_key,
    write_passages,
)
from .learners import ModelFormatError, deserialize_model, serialize_model
from .learners.serialize import load_envelope


class ConfigError(ValidationError):
    """Malformed or inconsistent run config."""


CONFIG_KEYS = {
    "seed", "output_dir", "inputs", "tasks", "selectors", "models", "hyperparameters",
    "min_y_mode", "match_on_category", "min_level_count", "holdout_years", "save_models",
}
INPUT_KEYS = {"race_history", "checkpoint_meta", "results"}


class RunConfig:
    """Parsed config. Relative paths resolve against the config file's folder."""

    def __init__(self, path):
        self.path = Path(path)
        self.raw = self.path.read_bytes()
        try:
            d = json.loads(self.raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{self.path}: not valid JSON: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError(f"{self.path}: top level must be an object")
        unknown = sorted(set(d) - CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"{self.path}: unknown keys {unknown}")
        if "seed" not in d:
            raise ConfigError(f"{self.path}: 'seed' is mandatory")
        if not isinstance(d["seed"], int) or isinstance(d["seed"], bool) or d["seed"] < 0:
            raise ConfigError(f"{self.path}: seed must be a non-negative integer")
        self.seed = d["seed"]
        base = self.path.parent
        self.output_dir = base / d.get("output_dir", "run")
        inputs = d.get("inputs")
        if not isinstance(inputs, dict) or set(inputs) != INPUT_KEYS:
            raise ConfigError(f"{self.path}: 'inputs' needs exactly {sorted(INPUT_KEYS)}")
        results = inputs["results"]
        if isinstance(results, str):
            results = [results]
        self.race_history = base / inputs["race_history"]
        self.checkpoint_meta = base / inputs["checkpoint_meta"]
        self.results = [base / r for r in results]
        self.tasks = self._choice_list(d, "tasks", TASKS, list(TASKS))
        self.selectors = self._choice_list(d, "selectors", SELECTORS, list(SELECTORS))
        self.models = self._choice_list(d, "models", MODELS, list(MODELS))
        hp = d.get("hyperparameters", {})
        if not isinstance(hp, dict) or any(k not in MODELS or not isinstance(v, dict)
                                           for k, v in hp.items()):
            raise ConfigError(f"{self.path}: hyperparameters must map model names to objects")
        self.hyperparameters = hp
        self.min_y_mode = d.get("min_y_mode", "retrospective")
        if self.min_y_mode not in MIN_Y_MODES:
            raise ConfigError(f"{self.path}: min_y_mode must be one of {MIN_Y_MODES}")
        self.match_on_category = bool(d.get("match_on_category", False))
        self.min_level_count = int(d.get("min_level_count", 50))
        self.holdout_years = d.get("holdout_years")
        self.save_models = bool(d.get("save_models", True))

    def _choice_list(self, d, key, allowed, default):
        v = d.get(key, default)
        if not isinstance(v, list) or not v or any(x not in allowed for x in v):
            raise ConfigError(f"{self.path}: {key} must be a non-empty list drawn from {allowed}")
        return list(dict.fromkeys(v))

    def stage(self, name) -> Path:
        return self.output_dir / name


# --- stage directories ----------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(directory: Path) -> None:
    files = sorted(p for p in directory.rglob("*") if p.is_file() and p.name != "manifest.json")
    entries = {p.relative_to(directory).as_posix(): _sha256(p) for p in files}
    (directory / "manifest.json").write_text(
        json.dumps({"files": entries}, indent=2, sort_keys=True) + "\n", encoding="utf-8")


class StageDir:
    """Context manager yielding a scratch directory that replaces ``final``
    only if the block completes."""

    def __init__(self, cfg: RunConfig, name: str):
        self.cfg = cfg
        self.final = cfg.stage(name)

    def __enter__(self) -> Path:
        self.final.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{self.final.name}.", dir=self.final.parent))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        (self.tmp / "config.json").write_bytes(self.cfg.raw)
        write_manifest(self.tmp)
        if self.final.exists():
            shutil.rmtree(self.final)
        self.tmp.rename(self.final)
        return False


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"{path} is missing; run `trailcast {stage}` first")
    return path


def write_rows(path: Path, rows: list[dict], header: list[str]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format_value(r[h]) for h in header])


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def seconds(v) -> int | str:
    """Times are integer seconds in machine outputs."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return int(round(float(v)))


def hms(s) -> str:
    s = int(round(float(s)))
    sign = "-" if s < 0 else ""
    s = abs(s)
    return f"{sign}{s // 3600}:{s % 3600 // 60:02d}:{s % 60:02d}"


def _slug(text: str) -> str:
    return text.replace("+", "_").replace("&", "and")


# --- ingest / features ----------------------------------------------------

def _load_tables(cfg: RunConfig):
    d = _require(cfg.stage("ingest"), "ingest")
    tables = {}
    for p in sorted(d.glob("passages_*.csv")):
        year = int(p.stem.split("_")[1])
        tables[year] = read_passages(p, year)
    if not tables:
        raise ValidationError(f"{d}: no passages files")
    return tables


def _load_history(cfg: RunConfig):
    hist = parse_race_history(cfg.race_history, cfg.match_on_category, diagnostics=False)
    return build_history_index(hist.records)


def cmd_ingest(cfg: RunConfig, args) -> None:
    res = ingest(cfg.race_history, cfg.checkpoint_meta, cfg.results,
                 match_on_category=cfg.match_on_category)
    with StageDir(cfg, "ingest") as out:
        for year, table in sorted(res.tables.items()):
            write_passages(table, out / f"passages_{year}.csv")
        _dump_json(out / "diagnostics.json", res.diagnostics)
    total = sum(e["runners"] for e in res.diagnostics["editions"].values())
    print(f"ingest: {len(res.tables)} editions, {total} runners -> {cfg.stage('ingest')}")


def cmd_features(cfg: RunConfig, args) -> None:
    tables = _load_tables(cfg)
    meta = parse_checkpoint_meta(cfg.checkpoint_meta)
    index = _load_history(cfg)
    with StageDir(cfg, "features") as out:
        for task in cfg.tasks:
            fm = assemble_design_matrix(tables, meta, index, target=task, min_y=cfg.min_y_mode,
                                        min_level_count=cfg.min_level_count)
            fm.save(out / f"{task}.csv")
            print(f"features: {task} {fm.X.shape[0]} rows x {fm.X.shape[1]} columns")


# --- cross-validation -----------------------------------------------------

OVERALL_HEADER = ["task", "model", "selector", "metric", "value", "n"]
PER_CHECKPOINT_HEADER = ["task", "model", "selector", "checkpoint", "metric", "value", "n"]
ROC_HEADER = ["model", "selector", "fpr", "tpr", "threshold"]
COVERAGE_HEADER = ["model", "selector", "checkpoint", "coverage", "mean_width_s", "n"]
IMPORTANCE_HEADER = ["task", "model", "selector", "rank", "feature", "importance"]
RUNS_HEADER = ["task", "model", "selector", "holdout_year", "n_train", "n_test", "metric", "value"]
PRED_HEADER = ["task", "model", "selector", "runner_key", "edition_year", "checkpoint", "truth",
               "prediction", "lower_s", "upper_s"]


def _time_metric(rows, keys=("value",)):
    """Round RMSE-type values to integer seconds."""
    for r in rows:
        if r.get("metric", "rmse_s") == "rmse_s":
            for k in keys:
                r[k] = seconds(r[k])
    return rows


def _splits_for(cfg: RunConfig, fm: FeatureMatrix):
    splits = make_loyo_splits(fm.edition_year)
    if cfg.holdout_years:
        splits = [s for s in splits if s.year in set(cfg.holdout_years)]
        if not splits:
            raise ConfigError(f"holdout_years {cfg.holdout_years} match no edition")
    return splits


def cmd_cv(cfg: RunConfig, args) -> None:
    fdir = _require(cfg.stage("features"), "features")
    matrices = [FeatureMatrix.load(_require(fdir / f"{t}.csv", "features")) for t in cfg.tasks]
    cells, runs = [], []
    for fm in matrices:
        rep = run_grid(fm, cfg.models, cfg.selectors, seed=cfg.seed,
                       params=cfg.hyperparameters, splits=_splits_for(cfg, fm),
                       threads=args.threads)
        cells.extend(rep.cells)
        runs.extend(rep.runs)
    report = GridReport(cells=cells, runs=runs)
    with StageDir(cfg, "cv") as out:
        write_rows(out / "overall.csv", _time_metric(report.overall()), OVERALL_HEADER)
        write_rows(out / "per_checkpoint.csv", _time_metric(report.per_checkpoint()),
                   PER_CHECKPOINT_HEADER)
        write_rows(out / "roc.csv", report.roc(), ROC_HEADER)
        cov = report.coverage()
        for r in cov:
            r["mean_width_s"] = seconds(r["mean_width_s"])
        write_rows(out / "coverage.csv", cov, COVERAGE_HEADER)
        write_rows(out / "importance.csv", report.importance(), IMPORTANCE_HEADER)
        write_rows(out / "runs.csv", _time_metric(runs), RUNS_HEADER)
        write_rows(out / "predictions.csv", _prediction_rows(cells), PRED_HEADER)
        summary = {
            "seed": cfg.seed,
            "tasks": cfg.tasks,
            "models": [c for c in MODELS if c in {cell.model for cell in cells}],
            "selectors": cfg.selectors,
            "holdout_years": sorted({r["holdout_year"] for r in runs}),
            "n_cells": len(cells),
            "files": ["overall.csv", "per_checkpoint.csv", "roc.csv", "coverage.csv",
                      "importance.csv", "runs.csv", "predictions.csv"],
        }
        _dump_json(out / "summary.json", summary)
        if cfg.save_models:
            _save_final_models(cfg, matrices, out / "models", {c.model for c in cells})
    print(f"cv: {len(cells)} cells -> {cfg.stage('cv')}")


def _prediction_rows(cells):
    rows = []
    for c in cells:
        for i in range(c.truth.size):
            reg = c.task == "passage_time"
            rows.append({
                "task": c.task, "model": c.model, "selector": c.selector,
                "runner_key": c.runner_keys[i], "edition_year": int(c.year[i]),
                "checkpoint": int(c.checkpoint[i]),
                "truth": int(c.truth[i]),
                "prediction": seconds(c.pred[i]) if reg else float(c.pred[i]),
                "lower_s": seconds(c.lower[i]) if c.lower is not None else "",
                "upper_s": seconds(c.upper[i]) if c.upper is not None else "",
            })
    return rows


def _save_final_models(cfg, matrices, directory: Path, models) -> None:
    """Refit every (task, model, selector) on all rows for ``predict``."""
    directory.mkdir()
    for fm in matrices:
        for model in [m for m in MODELS if m in models]:
            for sel in cfg.selectors:
                sub = fm.select(sel)
                mdl = fit_model(model, fm.task, sub.X, sub.y, groups=sub.target_checkpoint,
                                seed=cfg.seed, params=cfg.hyperparameters.get(model))
                blob = serialize_model(mdl, columns=sub.columns, seed=cfg.seed,
                                       columns_sidecar=f"features/{fm.task}.json")
                (directory / f"{fm.task}__{model}__{_slug(sel)}.json").write_bytes(blob)


# --- report ---------------------------------------------------------------

def _read_csv(path: Path) -> list[dict]:
    with path.open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def format_metric(metric: str, value: str) -> str:
    if value == "":
        return "n/a"
    if metric == "rmse_s":
        return f"{hms(value)} ({int(value)} s)"
    return f"{float(value):.4f}"


def cmd_report(cfg: RunConfig, args) -> None:
    cv = _require(cfg.stage("cv"), "cv")
    overall = _read_csv(_require(cv / "overall.csv", "cv"))
    coverage = _read_csv(_require(cv / "coverage.csv", "cv"))
    buf = io.StringIO()
    buf.write(f"trailcast report (seed {cfg.seed})\n\n")
    for task in TASKS:
        rows = [r for r in overall if r["task"] == task]
        if not rows:
            continue
        label = "RMSE of passage time" if task == "passage_time" else "AUC of dropout"
        buf.write(f"{label}, pooled out-of-fold\n")
        for r in rows:
            buf.write(f"  {r['model']:<10} {r['selector']:<26} "
                      f"{format_metric(r['metric'], r['value'])}  n={r['n']}\n")
        buf.write("\n")
    cov_all = [r for r in coverage if r["checkpoint"] == "all"]
    if cov_all:
        buf.write("95% interval coverage (quantile forest)\n")
        for r in cov_all:
            width = f"{hms(r['mean_width_s'])} ({r['mean_width_s']} s)" if r["mean_width_s"] else "n/a"
            buf.write(f"  {r['model']:<10} {r['selector']:<26} coverage {float(r['coverage']):.4f}"
                      f"  mean width {width}  n={r['n']}\n")
        buf.write("\n")
    buf.write("Artifacts\n")
    for name in ("overall.csv", "per_checkpoint.csv", "roc.csv", "coverage.csv",
                 "importance.csv", "runs.csv", "predictions.csv"):
        buf.write(f"  {name}: {(Path('..') / 'cv' / name).as_posix()}\n")
    with StageDir(cfg, "report") as out:
        (out / "summary.txt").write_text(buf.getvalue(), encoding="utf-8")
    sys.stdout.write(buf.getvalue())


# --- predict --------------------------------------------------------------

def levels_from_columns(columns) -> dict:
    levels = {c: [] for c in CATEGORICAL}
    for name in columns:
        head, sep, level = name.partition("=")
        if sep and head in levels:
            levels[head].append(level)
    return levels


def feed_table(path, year, n_checkpoints, match_on_category=False):
    """PassageTable from a scan feed in results format."""
    res = parse_results(path)
    records, demo = [], {}
    for r in res.records:
        key = runner_key(r.name, r.nationality, r.category if match_on_category else None)
        demo.setdefault(key, RunnerInfo(r.gender, r.nationality, r.category))
        records.append(PassageRecord(key, year, r.checkpoint, r.cumulative_time_s))
    table, bad = derive_passage_times(records, n_checkpoints, year, demo)
    for key, reason in bad:
        print(f"{path}: runner {key!r} skipped: {reason}", file=sys.stderr)
    return derive_dropout_labels(table)


def prediction_rows(table, meta, history_index, columns, min_y="retrospective", stream=None):
    """Feature rows for each runner's next checkpoint.

    Returns (X, runner_keys, last_checkpoint). Runners with fewer than two
    scans, a gap in the last two segments, no history, or who already
    finished are skipped with a notice on ``stream``.
    """
    stream = sys.stderr if stream is None else stream
    levels = levels_from_columns(columns)
    full = selector_columns(levels)[SELECTORS[-1]]
    pos = {c: i for i, c in enumerate(full)}
    missing = [c for c in columns if c not in pos]
    if missing:
        raise ValidationError(f"model columns not producible from features: {missing[:3]}")
    pick = [pos[c] for c in columns]
    cutoff = meta[0].start_date
    T = table.n_checkpoints
    last = table.last_checkpoint()
    rows, keys, lasts = [], [], []
    mins = {}
    for i, key in enumerate(table.runner_keys):
        t = int(last[i])
        n_scans = int((table.cumulative[i] != -1).sum())
        if n_scans < 2:
            print(f"{key}: fewer than two scans; skipped", file=stream)
            continue
        if t >= T:
            print(f"{key}: already finished; skipped", file=stream)
            continue
        if table.Y(t)[i] <= 0 or table.Y(t - 1)[i] <= 0:
            print(f"{key}: last two segment times not both defined; skipped", file=stream)
            continue
        hist = history_index.get(key)
        if not hist:
            print(f"{key}: no race history; skipped", file=stream)
            continue
        try:
            rf = compute_runner_features(hist, cutoff, table.gender[i], table.nationality[i],
                                         table.category[i])
        except ValidationError:
            print(f"{key}: no race history before {cutoff}; skipped", file=stream)
            continue
        for s in (t, t - 1):
            if s not in mins:
                mins[s] = segment_minimum(table, s, min_y)
        x = meta[t].feature_values()  # checkpoint t + 1
        lag = lag_block([table.Y(t)[i]], [table.Y(t - 1)[i]], [mins[t][i]], [mins[t - 1][i]], x)[0]
        oh = one_hot({"gender": rf.gender, "nationality": rf.nationality,
                      "category": rf.category}, levels)
        rows.append(np.concatenate([x, rf.values, oh, lag])[pick])
        keys.append(key)
        lasts.append(t)
    X = np.vstack(rows) if rows else np.zeros((0, len(columns)))
    return X, keys, lasts


def _load_model(path):
    data = Path(path).read_bytes()
    env = load_envelope(data)
    if not env.get("columns"):
        raise ModelFormatError(f"{path}: model file carries no column list")
    return deserialize_model(data), env["columns"]


def cmd_predict(cfg: RunConfig, args) -> None:
    if args.model is None and args.dropout_model is None:
        raise ConfigError("predict needs --model and/or --dropout-model")
    meta_all = parse_checkpoint_meta(cfg.checkpoint_meta)
    if args.edition_year not in meta_all:
        raise ValidationError(f"no checkpoint metadata for edition {args.edition_year}")
    meta = meta_all[args.edition_year]
    table = feed_table(args.feed, args.edition_year, len(meta), cfg.match_on_category)
    index = _load_history(cfg)
    out_rows: dict[str, dict] = {}
    order: list[str] = []
    for kind, path in (("passage", args.model), ("dropout", args.dropout_model)):
        if path is None:
            continue
        model, columns = _load_model(path)
        X, keys, lasts = prediction_rows(table, meta, index, columns, cfg.min_y_mode)
        pred = model.predict(X) if len(keys) else np.zeros(0)
        lo = hi = None
        if kind == "passage" and getattr(model, "mode", None) == "quantile" and len(keys):
            q = model.predict_quantiles(X, (0.025, 0.975))
            lo, hi = q[:, 0], q[:, 1]
        for j, key in enumerate(keys):
            if key not in out_rows:
                order.append(key)
                out_rows[key] = {"runner_key": key, "last_checkpoint": lasts[j],
                                 "next_checkpoint": lasts[j] + 1, "expected_passage_s": "",
                                 "lower_s": "", "upper_s": "", "dropout_probability": ""}
            r = out_rows[key]
            if kind == "passage":
                r["expected_passage_s"] = seconds(pred[j])
                if lo is not None:
                    r["lower_s"], r["upper_s"] = seconds(lo[j]), seconds(hi[j])
            else:
                r["dropout_probability"] = float(pred[j])
    header = ["runner_key", "last_checkpoint", "next_checkpoint", "expected_passage_s",
              "lower_s", "upper_s", "dropout_probability"]
    with StageDir(cfg, "predict") as out:
        write_rows(out / "predictions.csv", [out_rows[k] for k in sorted(order)], header)
    print(f"predict: {len(order)} runners -> {cfg.stage('predict')}")


# --- simulate -------------------------------------------------------------

def cmd_simulate(args) -> None:
    spec = SyntheticRaceSpec(
        n_runners=args.runners, n_checkpoints=args.checkpoints, years=tuple(args.years),
        fatigue=args.fatigue, slowness=args.slowness, slowdown=args.slowdown,
        noise_scale=args.noise, seed=args.seed)
    try:
        spec.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.directory)
    paths = write_inputs(generate_synthetic(spec), out)
    cfg = {
        "seed": args.seed,
        "output_dir": "run",
        "inputs": {
            "race_history": Path(paths["race_history"]).name,
            "checkpoint_meta": Path(paths["checkpoint_meta"]).name,
            "results": [Path(p).name for p in paths["results"]],
        },
        "tasks": list(TASKS),
        "selectors": list(SELECTORS),
        "models": list(MODELS),
    }
    cfg_path = out / "config.json"
    if not cfg_path.exists():
        _dump_json(cfg_path, cfg)
    print(f"simulate: {len(spec.years)} editions of {spec.n_runners} runners -> {out}")


# --- entry point ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="trailcast",
        description="Checkpoint passage-time, interval and dropout models for trail races.")
    sub = p.add_subparsers(dest="command", required=True)

    def staged(name, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("config", help="JSON run config")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker cap for cross-validation cells (results do not change)")
        return sp

    staged("ingest", "validate inputs and write passage tables plus diagnostics")
    staged("features", "assemble the design matrix for each task")
    staged("cv", "leave-one-year-out evaluation of every model and feature set")
    staged("report", "human-readable summary of the cv outputs")
    sp = staged("predict", "predict the next checkpoint for each runner of a live scan feed")
    sp.add_argument("--feed", required=True, help="scan feed CSV in results format")
    sp.add_argument("--edition-year", type=int, required=True,
                    help="edition whose checkpoint metadata applies")
    sp.add_argument("--model", help="passage_time model file from cv/models")
    sp.add_argument("--dropout-model", help="dropout model file from cv/models")

    sim = sub.add_parser("simulate", help="write a synthetic race data set and a starter config")
    sim.add_argument("directory")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--runners", type=int, default=200)
    sim.add_argument("--checkpoints", type=int, default=10)
    sim.add_argument("--years", type=int, nargs="+", default=[2015, 2016, 2017])
    sim.add_argument("--fatigue", type=float, default=0.0)
    sim.add_argument("--slowness", type=float, default=0.0)
    sim.add_argument("--slowdown", type=float, default=0.0)
    sim.add_argument("--noise", type=float, default=0.08)
    return p


COMMANDS = {
    "ingest": cmd_ingest, "features": cmd_features, "cv": cmd_cv, "report": cmd_report,
    "predict": cmd_predict,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            cmd_simulate(args)
        else:
            COMMANDS[args.command](RunConfig(args.config), args)
    except (ValidationError, FileNotFoundError, ModelFormatError) as exc:
        print(f"trailcast {args.command}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"trailcast {args.command}: internal error: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
