"""End-to-end acceptance checks.

Each test carries a ``criterion`` mark; the terminal summary prints one
PASS/FAIL line per criterion. Tolerances and runtime limits are pinned as
module constants.
"""
import hashlib
import json
import os
import shutil
import subprocess
import time

import numpy as np
import pandas as pd
import pytest

from transit_eta.evaluation import EvalSpec, evaluate, mae_std
from transit_eta.features import BASIC_COLUMNS, FeatureContext, FeatureSet, build_hop_dataset, build_longdist_dataset
from transit_eta.hybrid import BANDS, DEFAULT_TABLE
from transit_eta.ingest import PingTable
from transit_eta.match import preprocess, read_trips, to_trips, trips_frame
from transit_eta.models import MlpConfig, RbfnConfig, build_ha, ha_model, predict, predict_recursive, train_model
from transit_eta.models import mlp as mlp_mod
from transit_eta.models import rbfn as rbfn_mod
from transit_eta.synth import SynthSpec, generate, working_days
from transit_eta.timetable import LineGroup

from oracles import brute_force_ha, exact_mae_std, finite_difference_check
from test_hybrid import PUBLISHED

HA_RUNTIME_S = 60.0
GRADIENT_RUNTIME_S = 10.0
GRADIENT_EPS = 1e-5
GRADIENT_REL_ERR = 1e-4
GRADIENT_COORDS = 10
RECURSIVE_RUNTIME_S = 300.0
RECURSIVE_SIGMA = 0.3
RECURSIVE_RATIO = 1.5
HA_VARIANT_RUNTIME_S = 120.0
HA_VARIANT_DAYS = 15
HA_VARIANT_LINE_SHARE = 0.8
HA_FEATURE_RUNTIME_S = 600.0
PING_INTERVAL_S = 30.0
GLITCH_RATE = 0.01
GLITCH_TOLERANCE_S = 60.0
GLITCH_SHARE = 0.99
METRIC_PAIRS = 1000
METRIC_SCALINGS = 100
METRIC_REL_ERR = 1e-12

TABLE_BANDS = [(1, 3), (4, 8), (9, 15), (16, 20), (21, 27)]


def _split(trips, test_date):
    return [t for t in trips if t.date != test_date], [t for t in trips if t.date == test_date]


@pytest.mark.criterion(1, "HA table equals brute-force group-by averaging (20 lines, 10 days)")
def test_ha_matches_brute_force():
    city = generate(SynthSpec(seed=1, n_lines=20, days=tuple(working_days("2021-03-08", 10)), noise_sigma=0.3),
                    emit_pings=False)
    trips = city.truth_trips()
    start = time.perf_counter()
    table = build_ha(trips)
    elapsed = time.perf_counter() - start
    oracle = brute_force_ha(trips)
    cells = table.cells
    got = {key: (m, c) for key, m, c in zip(
        zip(cells.line, cells.direction, cells.day_class, cells.bucket, cells.origin, cells.dest),
        cells.mean_s, cells["count"])}
    assert len(got) == len(oracle)
    mismatched = [k for k, v in oracle.items() if got.get(k) != v]
    assert not mismatched, mismatched[:5]
    assert elapsed < HA_RUNTIME_S


@pytest.mark.criterion(2, "MLP and RBFN analytic gradients match central differences")
def test_gradients_match_finite_differences():
    start = time.perf_counter()
    city = generate(SynthSpec(seed=2, n_lines=1, days=("2021-03-11",), noise_sigma=0.3), emit_pings=False)
    ds = build_longdist_dataset(city.truth_trips())
    X = ds[BASIC_COLUMNS].to_numpy(dtype=float)
    y = ds.label.to_numpy(dtype=float)
    rng = np.random.default_rng(0)
    fit_rows, check_rows = rng.choice(len(y), 2000, replace=False), rng.choice(len(y), 256, replace=False)

    cfg = MlpConfig(hidden_layers=(12, 32), activations="relu", epochs=2)
    mlp = mlp_mod.train_mlp(cfg, X[fit_rows], y[fit_rows])
    Z = mlp.scaler.apply(X[check_rows])
    t = (y[check_rows] - mlp.y_mean) / mlp.y_std
    params = [p.copy() for p in mlp.params]
    mlp_err = finite_difference_check(lambda p: mlp_mod.loss_and_grad(p, Z, t, cfg.activations), params,
                                      n_coords=GRADIENT_COORDS, eps=GRADIENT_EPS)

    rbf = rbfn_mod.train_rbfn(RbfnConfig(M=10), X[fit_rows], y[fit_rows])
    Z = rbf.scaler.apply(X[check_rows])
    ys = y[check_rows] / y.std()
    p = rbf.params
    params = [p.centers.copy(), p.beta.copy(), p.weights / y.std(), np.array([p.bias / y.std()])]
    rbf_err = finite_difference_check(lambda q: rbfn_mod.loss_and_grad(q, Z, ys), params,
                                      n_coords=GRADIENT_COORDS, eps=GRADIENT_EPS)
    elapsed = time.perf_counter() - start
    assert mlp_err.max() < GRADIENT_REL_ERR, mlp_err
    assert rbf_err.max() < GRADIENT_REL_ERR, rbf_err
    assert elapsed < GRADIENT_RUNTIME_S


@pytest.mark.criterion(3, "long-distance beats recursive from 4-8 stops; ratio > 1.5 at 21-27")
def test_recursive_vs_longdist():
    start = time.perf_counter()
    days = ("2021-03-04", "2021-03-11", "2021-03-18", "2021-03-25")
    city = generate(SynthSpec(seed=3, n_lines=3, noise_sigma=RECURSIVE_SIGMA, days=days), emit_pings=False)
    train, test = _split(city.truth_trips(), days[-1])
    hop = train_model("mlp", "basic", build_hop_dataset(train), MlpConfig())
    longdist = train_model("mlp", "basic", build_longdist_dataset(train), MlpConfig())
    q = build_longdist_dataset(test)
    k = (q.dest_idx - q.origin_idx).to_numpy()
    n_stops = q.line.map({line: len(city.timetable.pattern(line, "A").stops) for line in q.line.unique()})
    rec = predict_recursive(hop, q, k, n_stops.to_numpy())
    ld = predict(longdist, q)
    label = q.label.to_numpy()
    maes = {}
    for lo, hi in TABLE_BANDS:
        m = (k >= lo) & (k <= hi)
        maes[(lo, hi)] = (mae_std(ld[m], label[m])[0], mae_std(rec[m], label[m])[0])
    report = evaluate({"longdist": ld, "recursive": rec}, q, EvalSpec.preset("tables", "tables"))
    rush = report.cells[(report.cells.band == "21-27") & (report.cells.bucket == "7-10")].set_index("model").mae_s
    elapsed = time.perf_counter() - start
    print("long-distance vs recursive MAE by band:", {f"{a}-{b}": tuple(round(x, 1) for x in v)
                                                      for (a, b), v in maes.items()})
    for band, (ld_mae, rec_mae) in maes.items():
        if band[0] >= 4:
            assert ld_mae < rec_mae, band
    assert maes[(21, 27)][1] / maes[(21, 27)][0] > RECURSIVE_RATIO
    assert rush["recursive"] / rush["longdist"] > RECURSIVE_RATIO
    assert elapsed < RECURSIVE_RUNTIME_S


@pytest.mark.criterion(4, "HA over all working days beats same-weekday HA on >= 80% of lines")
def test_ha_all_days_vs_same_weekday():
    start = time.perf_counter()
    days = tuple(working_days("2021-03-08", HA_VARIANT_DAYS))
    city = generate(SynthSpec(seed=4, n_lines=8, stops_per_line=(20,), days=days, noise_sigma=0.3),
                    emit_pings=False)
    train, test = _split(city.truth_trips(), days[-1])
    q = build_longdist_dataset(test)
    all_days = predict(ha_model(build_ha(train, "all_working_days")), q)
    same_day = predict(ha_model(build_ha(train, "same_weekday")), q)
    wins = []
    for line in sorted(q.line.unique()):
        m = (q.line == line).to_numpy()
        wins.append(mae_std(all_days[m], q.label[m])[0] <= mae_std(same_day[m], q.label[m])[0])
    elapsed = time.perf_counter() - start
    assert len(wins) == 8
    assert np.mean(wins) >= HA_VARIANT_LINE_SHARE
    assert elapsed < HA_VARIANT_RUNTIME_S


@pytest.mark.criterion(5, "MLP+HistAvg beats MLP+Timetable at 16-25 stops under persistent segment delays")
def test_ha_features_win_at_long_range():
    start = time.perf_counter()
    days = ("2021-03-04", "2021-03-11", "2021-03-18", "2021-03-25")
    city = generate(SynthSpec(seed=5, n_lines=3, days=days, noise_sigma=0.2, segment_delay_sigma=0.4),
                    emit_pings=False)
    train, test = _split(city.truth_trips(), days[-1])
    ctx = FeatureContext(timetable=city.timetable, ha_table=build_ha(train))
    maes = {}
    for fs in (FeatureSet.TIMETABLE, FeatureSet.HISTAVG):
        model = train_model("mlp", fs, build_longdist_dataset(train, fs, ctx), MlpConfig(epochs=30))
        q = build_longdist_dataset(test, fs, ctx)
        d = (q.dest_idx - q.origin_idx).to_numpy()
        m = (d >= 16) & (d <= 25)
        maes[fs] = mae_std(predict(model, q)[m], q.label.to_numpy()[m])[0]
    elapsed = time.perf_counter() - start
    assert maes[FeatureSet.HISTAVG] < maes[FeatureSet.TIMETABLE], maes
    assert elapsed < HA_FEATURE_RUNTIME_S


@pytest.mark.criterion(6, "built-in dispatch table matches the published grid on all 24 cells")
def test_dispatch_table_fidelity(cli_env, tmp_path):
    rows = PUBLISHED.split("\n")[1:-1]
    cells = 0
    for gid, row in enumerate(rows, start=1):
        for band, cell in zip(BANDS, row.split()):
            kind, fs = DEFAULT_TABLE.cells[(LineGroup(gid), band)]
            assert f"{kind}+{fs.value}" == cell
            cells += 1
    assert cells == 24 == len(DEFAULT_TABLE.cells)
    out = subprocess.run(cli_env + ["dispatch-check", "--dir", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0


def _recovery_errors(city):
    trips = to_trips(preprocess(PingTable(city.pings, 0), city.timetable), city.timetable)
    rec = trips_frame(trips)
    groups = {k: g.arrival_s.to_numpy() for k, g in rec.groupby(["vehicle_id", "direction", "seq"])}
    vehicle = {(l, d, r): v for (l, d, _, r), (v, _) in city.vehicle_of_run.items()}
    errs = []
    for row in city.truth.itertuples():
        got = groups.get((vehicle[(row.line, row.direction, row.run)], row.direction, row.seq))
        errs.append(np.inf if got is None else np.min(np.abs(got - row.arrival_s)))
    return np.array(errs)


@pytest.mark.criterion(7, "pipeline recovers every arrival within 30 s (noiseless); >= 99% within 60 s at 1% glitches")
def test_pipeline_recovery():
    base = dict(seed=17, n_lines=3, days=("2021-03-11",))
    clean = _recovery_errors(generate(SynthSpec(noise_sigma=0.0, glitch_rate=0.0, **base)))
    assert len(clean) > 5000
    assert np.all(clean <= PING_INTERVAL_S), np.sort(clean)[-5:]
    glitchy = _recovery_errors(generate(SynthSpec(noise_sigma=0.0, glitch_rate=GLITCH_RATE, **base)))
    assert np.mean(glitchy <= GLITCH_TOLERANCE_S) >= GLITCH_SHARE


@pytest.mark.criterion(8, "mae_std is exact and scale-equivariant")
def test_metric_correctness():
    rng = np.random.default_rng(8)
    pred, actual = rng.uniform(0, 3000, METRIC_PAIRS), rng.uniform(0, 3000, METRIC_PAIRS)
    assert mae_std(pred, actual) == exact_mae_std(pred, actual)
    mae, std = mae_std(pred, actual)
    for c in rng.uniform(1e-3, 1e3, METRIC_SCALINGS):
        m, s = mae_std(c * pred, c * actual)
        assert abs(m - c * mae) / (c * mae) < METRIC_REL_ERR
        assert abs(s - c * std) / (c * std) < METRIC_REL_ERR


def _digests(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for name in files:
            path = os.path.join(dirpath, name)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, root)] = hashlib.sha256(fh.read()).hexdigest()
    return out


def _cli_pipeline(cli_env, d):
    steps = [
        ["synth", "--out", "{dir}", "--seed", "9", "--lines", "2", "--days", "2021-03-04,2021-03-11",
         "--noise-sigma", "0.2"],
        ["preprocess"],
        ["build-dataset", "--features", "basic"],
        ["build-ha"],
        ["train", "--model", "mlp", "--features", "basic", "--epochs", "5"],
        ["train", "--model", "rbfn", "--features", "basic", "--centers", "10"],
        ["evaluate", "--baseline", "timetable", "--name", "run"],
    ]
    for step in steps:
        argv = [a.format(dir=d) for a in step[1:]]
        out = subprocess.run(cli_env + [step[0], "--dir", str(d)] + argv, capture_output=True, text=True)
        assert out.returncode == 0, (step, out.stderr)


@pytest.mark.criterion(9, "two CLI pipeline runs give byte-identical models, reports and manifests")
def test_cli_determinism(cli_env, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        d.mkdir()
        _cli_pipeline(cli_env, d)
    da, db = _digests(a), _digests(b)
    assert set(da) == set(db)
    models = [k for k in da if k.startswith("models" + os.sep)]
    reports = [k for k in da if k.startswith("eval" + os.sep)]
    manifests = [k for k in da if k.endswith("manifest.json")]
    assert len(models) >= 3 and any(k.endswith("report.csv") for k in reports) and manifests
    assert {k: da[k] for k in da} == {k: db[k] for k in da}


@pytest.mark.criterion(10, "bundled line-523 fixture flows through preprocess and build-dataset")
def test_fixture_smoke(cli_env, fixtures_dir, tmp_path):
    for name in ("stops.csv", "patterns.csv", "schedule.csv"):
        shutil.copy(os.path.join(fixtures_dir, "line523", name), tmp_path / name)
    pings = os.path.join(fixtures_dir, "pings_523_small.csv")
    with open(os.path.join(fixtures_dir, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    with open(pings, "rb") as fh:
        assert hashlib.sha256(fh.read()).hexdigest() == manifest["sha256"]
    for step in (["preprocess", "--pings", pings], ["build-dataset", "--features", "basic"]):
        out = subprocess.run(cli_env + [step[0], "--dir", str(tmp_path)] + step[1:], capture_output=True, text=True)
        assert out.returncode == 0, (step, out.stderr)
    trips = read_trips(tmp_path / "trips.csv")
    assert len(trips) >= 1
    for trip in trips:
        events = np.column_stack([trip.arrival, trip.departure]).ravel()
        assert np.all(np.diff(trip.arrival) > 0) and np.all(np.diff(events) >= 0)
        assert np.all(trip.arrival[1:] > trip.departure[:-1])
    built = sorted(p.name for p in (tmp_path / "datasets").iterdir() if p.suffix == ".csv")
    assert built and all(len(pd.read_csv(tmp_path / "datasets" / n)) > 0 for n in built)
