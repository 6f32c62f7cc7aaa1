import csv
import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from trailcast import cli
from trailcast.features import FeatureMatrix
from trailcast.learners import deserialize_model

HYPER = {"forest": {"n_trees": 10}, "boosted": {"n_rounds": 10},
         "lasso": {"n_lambda": 20, "cv_folds": 3}}
SELECTORS = ["checkpoint", "checkpoint+runner+lag1&2"]


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def configure(directory, **extra):
    cfg = json.loads((directory / "config.json").read_text())
    cfg.update({"selectors": SELECTORS, "hyperparameters": HYPER, "min_level_count": 5}, **extra)
    (directory / "config.json").write_text(json.dumps(cfg, indent=1))
    return directory / "config.json"


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("race")
    assert run("simulate", d, "--seed", 3, "--runners", 40, "--checkpoints", 6,
               "--years", 2015, 2016, "--slowness", 1.5, "--slowdown", 15) == 0
    return d


@pytest.fixture(scope="module")
def pipeline(workdir):
    cfg = configure(workdir)
    for stage in ("ingest", "features", "cv", "report"):
        assert run(stage, cfg) == 0, stage
    return cfg, workdir / "run"


def test_help_lists_subcommands():
    out = subprocess.run([sys.executable, "-m", "trailcast.cli", "--help"], capture_output=True,
                         text=True, check=True).stdout
    for name in ("ingest", "features", "cv", "report", "predict", "simulate"):
        assert name in out


def test_stage_directories_have_config_and_manifest(pipeline):
    cfg, out = pipeline
    for stage in ("ingest", "features", "cv", "report"):
        d = out / stage
        assert (d / "config.json").read_bytes() == cfg.read_bytes()
        manifest = json.loads((d / "manifest.json").read_text())
        assert "config.json" in manifest["files"] or "config.json" in json.dumps(manifest)


def test_valid_fixture_has_no_rejections(pipeline):
    _, out = pipeline
    diag = json.loads((out / "ingest" / "diagnostics.json").read_text())
    for e in diag["editions"].values():
        assert e["rows_rejected"] == 0 and e["runners_unmatched"] == 0


def test_cv_outputs_cover_the_grid(pipeline):
    _, out = pipeline
    rows = read_csv(out / "cv" / "overall.csv")
    cells = {(r["task"], r["model"], r["selector"]) for r in rows}
    assert cells == {(t, m, s) for t in ("passage_time", "dropout")
                     for m in ("intercept", "lasso", "forest", "boosted") for s in SELECTORS}
    runs = read_csv(out / "cv" / "runs.csv")
    assert len(runs) == 2 * 4 * 2 * 2
    for r in rows:
        if r["metric"] == "rmse_s":
            assert r["value"] == str(int(r["value"]))
    assert read_csv(out / "cv" / "roc.csv") and read_csv(out / "cv" / "importance.csv")


def test_report_numbers_match_csv(pipeline):
    _, out = pipeline
    text = (out / "report" / "summary.txt").read_text()
    for r in read_csv(out / "cv" / "overall.csv"):
        if r["metric"] == "auc":
            want = f"{float(r['value']):.4f}" if r["value"] else "n/a"
        else:
            want = f"({r['value']} s)"
        line = [ln for ln in text.splitlines()
                if ln.split()[:2] == [r["model"], r["selector"]] and f"n={r['n']}" in ln
                and "coverage" not in ln and (("s)" in ln) == (r["metric"] == "rmse_s"))]
        assert len(line) == 1 and want in line[0], (r, line)
    for r in read_csv(out / "cv" / "coverage.csv"):
        if r["checkpoint"] == "all":
            assert f"coverage {float(r['coverage']):.4f}" in text


def test_same_seed_gives_identical_bytes(pipeline, workdir, tmp_path):
    _, out = pipeline
    cfg = json.loads((workdir / "config.json").read_text())
    cfg["output_dir"] = str(tmp_path / "again")
    for name in ("race_history", "checkpoint_meta"):
        cfg["inputs"][name] = str(workdir / cfg["inputs"][name])
    cfg["inputs"]["results"] = [str(workdir / p) for p in cfg["inputs"]["results"]]
    p = tmp_path / "config.json"
    p.write_text(json.dumps(cfg))
    for stage in ("ingest", "features", "cv"):
        assert run(stage, p, "--threads", 2) == 0
        for f in (out / stage).rglob("*"):
            if f.is_file() and f.name not in ("config.json", "manifest.json"):
                assert f.read_bytes() == (tmp_path / "again" / stage / f.relative_to(
                    out / stage)).read_bytes(), f


def test_unmatched_runner_is_counted(workdir, tmp_path):
    for f in workdir.glob("*.csv"):
        shutil.copy(f, tmp_path)
    shutil.copy(workdir / "config.json", tmp_path)
    with open(tmp_path / "results_2016.csv", "a", encoding="utf-8") as fh:
        fh.write("Nobody Known,FRA,M,SE,1,4000\nNobody Known,FRA,M,SE,2,9000\n")
    assert run("ingest", tmp_path / "config.json") == 0
    diag = json.loads((tmp_path / "run" / "ingest" / "diagnostics.json").read_text())
    assert diag["editions"]["2016"]["runners_unmatched"] == 1
    assert diag["editions"]["2015"]["runners_unmatched"] == 0


def test_exit_codes(workdir, tmp_path, monkeypatch, capsys):
    for f in workdir.glob("*.csv"):
        shutil.copy(f, tmp_path)
    cfg = json.loads((workdir / "config.json").read_text())
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**cfg, "sede": 1}))
    assert run("ingest", bad) == 1
    bad.write_text(json.dumps({k: v for k, v in cfg.items() if k != "seed"}))
    assert run("ingest", bad) == 1
    assert run("ingest", tmp_path / "missing.json") == 1
    # schema mismatch aborts and names the file and line
    (tmp_path / "race_history.csv").write_text("who,what\n", encoding="utf-8")
    good = tmp_path / "config.json"
    good.write_text(json.dumps(cfg))
    assert run("ingest", good) == 1
    assert "race_history.csv" in capsys.readouterr().err
    # report before cv: missing upstream output
    assert run("report", good) == 1

    def boom(*a):
        raise RuntimeError("kaboom")

    monkeypatch.setitem(cli.COMMANDS, "report", boom)
    assert run("report", good) == 2
    assert "internal error" in capsys.readouterr().err


def make_feed(workdir, tmp_path, upto):
    rows = read_csv(workdir / "results_2016.csv")
    feed = tmp_path / "feed.csv"
    with open(feed, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(r for r in rows if int(r["checkpoint"]) <= upto)
    return feed


def test_predict_matches_feature_rows(pipeline, workdir, tmp_path, capsys):
    cfg, out = pipeline
    k = 4   # feed holds scans through checkpoint 3, so predictions target 4
    feed = make_feed(workdir, tmp_path, k - 1)
    models = out / "cv" / "models"
    forest = models / "passage_time__forest__checkpoint_runner_lag1and2.json"
    drop = models / "dropout__lasso__checkpoint_runner_lag1and2.json"
    assert run("predict", cfg, "--feed", feed, "--edition-year", 2016, "--model", forest,
               "--dropout-model", drop) == 0
    pred = read_csv(out / "predict" / "predictions.csv")
    # runners whose last scan is before k - 1 get their own next checkpoint
    assert pred and all(int(r["next_checkpoint"]) == int(r["last_checkpoint"]) + 1 for r in pred)
    assert max(int(r["next_checkpoint"]) for r in pred) == k
    assert all(int(r["lower_s"]) <= int(r["upper_s"]) for r in pred)

    fm = FeatureMatrix.load(out / "features" / "passage_time.csv")
    model = deserialize_model(forest.read_bytes())
    sel = fm.select("checkpoint+runner+lag1&2")
    where = {(key, int(y), int(t)): i for i, (key, y, t) in
             enumerate(zip(fm.runner_keys, fm.edition_year, fm.target_checkpoint))}
    checked = 0
    for r in pred:
        i = where.get((r["runner_key"], 2016, k))
        if i is None:
            continue   # runner stopped before checkpoint k, so no regression row
        assert int(r["expected_passage_s"]) == cli.seconds(model.predict(sel.X[i:i + 1])[0])
        checked += 1
    assert checked >= 10


def test_predict_with_intercept_is_constant(pipeline, workdir, tmp_path):
    cfg, out = pipeline
    feed = make_feed(workdir, tmp_path, 3)
    m = out / "cv" / "models" / "passage_time__intercept__checkpoint.json"
    assert run("predict", cfg, "--feed", feed, "--edition-year", 2016, "--model", m) == 0
    vals = {r["expected_passage_s"] for r in read_csv(out / "predict" / "predictions.csv")}
    assert len(vals) == 1


def test_predict_skips_runners_with_one_scan(pipeline, workdir, tmp_path, capsys):
    cfg, out = pipeline
    feed = make_feed(workdir, tmp_path, 1)
    m = out / "cv" / "models" / "passage_time__intercept__checkpoint.json"
    assert run("predict", cfg, "--feed", feed, "--edition-year", 2016, "--model", m) == 0
    assert "fewer than two scans" in capsys.readouterr().err
    assert read_csv(out / "predict" / "predictions.csv") == []
