"""``transit-eta`` command line.

Every subcommand works inside a data directory (``--dir``, default ``.``)
with a fixed layout::

    stops.csv patterns.csv schedule.csv    timetable
    pings.csv                              raw pings
    segments_aux.csv truth.csv             optional side tables
    progress.csv trips.csv                 written by ``preprocess``
    datasets/  models/  eval/              written by later stages

Each run writes a ``*.manifest.json`` next to its outputs recording input
digests, the effective configuration, its hash, the seed and library
versions. Exit codes: 0 ok, 2 usage error, 3 data error, 4 training
divergence.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from datetime import date

import numpy as np
import pandas as pd

from . import __version__, kernels
from .errors import DataError, TrainingDivergence, TransitEtaError
from .evaluation import BAND_PRESETS, BUCKET_PRESETS, EvalReport, EvalSpec, compare, evaluate
from .features import (OPTIONAL_EXTRAS, FeatureContext, FeatureSet, CongestionIndex, build_hop_dataset,
                       build_longdist_dataset, load_segments_aux, write_dataset)
from .hybrid import (BAND_LABELS, BANDS, DEFAULT_CELLS, WILDCARD_LINE, DispatchTable, hybrid_predict,
                     load_dispatch, registry_key)
from .ingest import ADAPTERS, harvest, read_ping_table
from .match import MatchConfig, preprocess, read_progress, read_trips, to_trips, write_progress, write_trips
from .models import (MlpConfig, RbfnConfig, build_ha, ha_model, load_model, predict, predict_recursive,
                     save_model, timetable_model, train_model)
from .synth import SynthSpec, generate, working_days
from .timetable import LineGroup, load_timetable_dir

log = logging.getLogger("transit_eta")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGENCE = 0, 2, 3, 4
META_KEYS = ["line", "date", "vehicle_id", "origin_idx", "dest_idx", "depart_time"]


class UsageError(Exception):
    """Invalid combination of options."""


# --- helpers ----------------------------------------------------------------

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _rel(args, path) -> str:
    return os.path.relpath(path, args.dir).replace(os.sep, "/")


PATH_OPTIONS = ("out", "pings", "dataset", "model", "models", "dispatch", "reports")


def _portable(args, value):
    """Paths inside ``--dir`` are recorded relative to it so manifests do not depend on where a run lives."""
    if isinstance(value, list):
        return [_portable(args, v) for v in value]
    if not isinstance(value, str):
        return value
    out = []
    for part in value.split(","):
        rel = os.path.relpath(os.path.abspath(part), os.path.abspath(args.dir))
        out.append(part if rel.startswith("..") else rel.replace(os.sep, "/"))
    return ",".join(out)


def _config_of(args) -> dict:
    skip = {"func", "dir", "config", "log_level"}
    return {k: (_portable(args, v) if k in PATH_OPTIONS else v)
            for k, v in sorted(vars(args).items()) if k not in skip}


def write_manifest(args, out_path, inputs, extra=None) -> str:
    """Write ``<out_path>.manifest.json`` (or ``manifest.json`` inside a directory)."""
    cfg = _config_of(args)
    cfg_text = json.dumps(cfg, sort_keys=True, default=str)
    doc = {
        "command": args.command,
        "inputs": {_rel(args, p): _sha256(p) for p in sorted(set(inputs)) if os.path.isfile(p)},
        "config": json.loads(cfg_text),
        "config_hash": hashlib.sha256(cfg_text.encode()).hexdigest(),
        "seed": getattr(args, "seed", None),
        "versions": {"transit_eta": __version__, "numpy": np.__version__, "pandas": pd.__version__,
                     "python": platform.python_version(), "kernels": kernels.BACKEND},
    }
    doc.update(extra or {})
    path = os.path.join(out_path, "manifest.json") if os.path.isdir(out_path) else out_path + ".manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def _p(args, *parts) -> str:
    return os.path.join(args.dir, *parts)


def _require(path, hint):
    if not os.path.exists(path):
        raise DataError(f"{path} not found; {hint}")
    return path


def _date_list(text):
    if text is None or text == "":
        return None
    out = []
    for t in str(text).split(","):
        t = t.strip()
        try:
            date.fromisoformat(t)
        except ValueError:
            raise UsageError(f"bad date {t!r}; use YYYY-MM-DD") from None
        out.append(t)
    return out


def split_dates(available, train=None, test=None, require_train=True) -> tuple[list[str], list[str]]:
    """Training and test dates.

    Defaults: the last available date is the test date; training uses up to
    three earlier dates of the same weekday, or every earlier date when there
    are none. Explicit date sets must be disjoint. With ``require_train``
    false an empty training set is allowed (single-day inputs).
    """
    available = sorted(set(available))
    if train and test and set(train) & set(test):
        raise UsageError(f"training and test dates overlap: {sorted(set(train) & set(test))}")
    if not available:
        raise UsageError("no working-day trips available")
    if test is None:
        test = [available[-1]]
    if train is None:
        wd = date.fromisoformat(test[0]).weekday()
        earlier = [d for d in available if d < min(test)]
        same = [d for d in earlier if date.fromisoformat(d).weekday() == wd]
        train = same[-3:] if same else earlier
    if set(train) & set(test):
        raise UsageError(f"training and test dates overlap: {sorted(set(train) & set(test))}")
    if not train and require_train:
        raise UsageError("no training dates precede the test dates")
    return sorted(train), sorted(test)


def _working_trips(args):
    path = _require(_p(args, "trips.csv"), "run `transit-eta preprocess` first")
    trips = [t for t in read_trips(path) if (t.day + 3) % 7 < 5]
    if getattr(args, "line", None) not in (None, "", WILDCARD_LINE):
        trips = [t for t in trips if t.line == args.line]
    return trips, [path]


def _split(args, trips, require_train=True):
    train, test = split_dates({t.date for t in trips}, _date_list(args.train_dates), _date_list(args.test_dates),
                              require_train)
    return ([t for t in trips if t.date in set(train)], [t for t in trips if t.date in set(test)], train, test)


def _extras(args) -> tuple[str, ...]:
    if not getattr(args, "extras", None):
        return ()
    ex = tuple(e.strip() for e in args.extras.split(",") if e.strip())
    for e in ex:
        if e not in OPTIONAL_EXTRAS:
            raise UsageError(f"unknown extra feature {e!r}; choose from {','.join(OPTIONAL_EXTRAS)}")
    return ex


def _context(args, fs: FeatureSet, train_trips, inputs) -> FeatureContext:
    tt_dir = args.dir
    tt = load_timetable_dir(tt_dir)
    inputs += [_p(args, f) for f in ("stops.csv", "patterns.csv", "schedule.csv")]
    extras = _extras(args)
    ctx = FeatureContext(timetable=tt, extras=extras)
    if fs is FeatureSet.HISTAVG:
        ctx.ha_table = build_ha(train_trips, "all_working_days")
    if "bus_lane" in extras or "lights" in extras:
        ctx.segments_aux = load_segments_aux(_require(_p(args, "segments_aux.csv"), "bus_lane/lights need it"))
        inputs.append(_p(args, "segments_aux.csv"))
    if "congestion" in extras:
        prog = _require(_p(args, "progress.csv"), "congestion needs progress records")
        ctx.congestion = CongestionIndex(read_progress(prog), tt)
        inputs.append(prog)
    if "weather" in extras:
        wpath = _require(_p(args, "weather.csv"), "the weather extra reads weather.csv (t + numeric columns)")
        ctx.weather = pd.read_csv(wpath)
        inputs.append(wpath)
    return ctx


def _build(method: str, trips, fs, ctx):
    return (build_hop_dataset if method == "hop" else build_longdist_dataset)(trips, fs, ctx)


# --- subcommands --------------------------------------------------------------

def cmd_harvest(args) -> int:
    out = args.out or _p(args, "pings.csv")
    n = harvest(args.endpoint, args.interval, args.duration, out, api_key=args.api_key,
                adapter=ADAPTERS[args.adapter], timeout=args.timeout)
    write_manifest(args, out, [], {"rows_written": n})
    print(f"harvested {n} rows into {out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    days = tuple(_date_list(args.days) or working_days(args.start_date, args.n_days)) if args.days or args.n_days \
        else SynthSpec.days
    spec = SynthSpec(seed=args.seed, n_lines=args.lines, noise_sigma=args.noise_sigma, trip_sigma=args.trip_sigma,
                     segment_delay_sigma=args.segment_delay_sigma, glitch_rate=args.glitch_rate, days=days,
                     base_hop_s=args.base_hop_s, headway_s=args.headway_s)
    os.makedirs(args.out, exist_ok=True)
    city = generate(spec)
    city.write(args.out)
    args.dir = args.out
    write_manifest(args, args.out, [])
    print(f"synthetic city: {len(spec.line_labels())} lines, {len(days)} days, "
          f"{len(city.pings)} pings, {len(city.truth)} truth events -> {args.out}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    pings_path = args.pings or _require(_p(args, "pings.csv"), "give --pings or put pings.csv in --dir")
    tt = load_timetable_dir(args.dir)
    table = read_ping_table(pings_path)
    cfg = MatchConfig(at_stop_m=args.at_stop_m, off_route_m=args.off_route_m, gap_s=args.gap_s)
    progress = preprocess(table, tt, cfg)
    write_progress(_p(args, "progress.csv"), progress)
    trips = to_trips(progress, tt, gap_s=cfg.gap_s)
    write_trips(_p(args, "trips.csv"), trips)
    inputs = [pings_path] + [_p(args, f) for f in ("stops.csv", "patterns.csv", "schedule.csv")]
    write_manifest(args, _p(args, "trips.csv"), inputs, {"skipped_rows": table.skipped,
                                                         "progress_records": len(progress), "trips": len(trips)})
    print(f"{len(table)} pings ({table.skipped} malformed skipped) -> {len(progress)} progress records, "
          f"{len(trips)} trips")
    return EXIT_OK


def cmd_build_dataset(args) -> int:
    fs = FeatureSet(args.features)
    trips, inputs = _working_trips(args)
    # basic and timetable features need no history, so a single-day input still yields a test set
    train_trips, test_trips, train, test = _split(args, trips, require_train=fs is FeatureSet.HISTAVG)
    ctx = _context(args, fs, train_trips, inputs)
    os.makedirs(_p(args, "datasets"), exist_ok=True)
    written = []
    for split, part in (("train", train_trips), ("test", test_trips)):
        if args.split not in ("both", split):
            continue
        if not part:
            log.warning("no %s dates; %s split not written", split, split)
            continue
        df = _build(args.method, part, fs, ctx)
        out = _p(args, "datasets", f"{args.method}_{fs.value}_{split}.csv")
        write_dataset(out, df)
        write_manifest(args, out, inputs, {"train_dates": train, "test_dates": test, "rows": len(df)})
        written.append(f"{out} ({len(df)} rows)")
    print("\n".join(written))
    return EXIT_OK


def _model_config(args):
    if args.model == "mlp":
        return MlpConfig(hidden_layers=tuple(int(w) for w in str(args.hidden).split(",")),
                         activations=tuple(a.strip() for a in args.activation.split(","))
                         if "," in args.activation else args.activation,
                         learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed)
    return RbfnConfig(M=args.centers, seed=args.seed, training=args.rbf_training)


def _model_path(args, kind, fs, method, line=None) -> str:
    suffix = f"_{line}" if line not in (None, "", WILDCARD_LINE) else ""
    return _p(args, "models", f"{kind}_{FeatureSet(fs).value}_{method}{suffix}.json")


def cmd_train(args) -> int:
    fs = FeatureSet(args.features)
    if args.method == "hop" and fs is not FeatureSet.BASIC:
        raise UsageError("hop models for recursive prediction support only --features basic")
    trips, inputs = _working_trips(args)
    train_trips, _, train, test = _split(args, trips)
    ctx = _context(args, fs, train_trips, inputs)
    df = _build(args.method, train_trips, fs, ctx)
    if len(df) < 2:
        raise DataError(f"only {len(df)} training samples on {train}")
    model = train_model(args.model, fs, df, _model_config(args))
    model.metadata.update({"method": args.method, "train_dates": train, "test_dates": test,
                           "registry_line": args.line or WILDCARD_LINE})
    os.makedirs(_p(args, "models"), exist_ok=True)
    out = args.out or _model_path(args, args.model, fs, args.method, args.line)
    save_model(out, model)
    write_manifest(args, out, inputs, {"train_dates": train, "test_dates": test, "samples": len(df)})
    print(f"trained {model.model_id} ({args.method}) on {len(df)} samples from {','.join(train)}; "
          f"final training MSE {model.metadata['final_loss']:.3f} -> {out}")
    return EXIT_OK


def cmd_build_ha(args) -> int:
    trips, inputs = _working_trips(args)
    train_trips, _, train, test = _split(args, trips)
    if args.selector == "same_weekday":
        wd = {date.fromisoformat(d).weekday() for d in test}
        train_trips = [t for t in train_trips if date.fromisoformat(t.date).weekday() in wd]
    table = build_ha(train_trips, args.selector)
    model = ha_model(table, {"train_dates": train, "test_dates": test})
    os.makedirs(_p(args, "models"), exist_ok=True)
    out = args.out or _p(args, "models", f"ha_{args.selector}.json")
    save_model(out, model)
    write_manifest(args, out, inputs, {"train_dates": train, "test_dates": test, "cells": len(table)})
    print(f"HA table ({args.selector}) with {len(table)} populated cells -> {out}")
    return EXIT_OK


def _aligned_test_sets(args, fsets, test_trips, train_trips, inputs) -> dict:
    """Long-distance test datasets for each feature set, restricted to their common samples."""
    sets = {}
    for fs in fsets:
        sets[fs] = _build("longdist", test_trips, fs, _context(args, fs, train_trips, inputs))
    common = None
    for df in sets.values():
        keys = pd.MultiIndex.from_frame(df[META_KEYS])
        common = keys if common is None else common.intersection(keys)
    out = {}
    for fs, df in sets.items():
        idx = pd.MultiIndex.from_frame(df[META_KEYS])
        df = df[idx.isin(common)].sort_values(META_KEYS, kind="stable").reset_index(drop=True)
        out[fs] = df
    return out


def _load_models(args, paths):
    models = []
    for p in paths:
        models.append((p, load_model(_require(p, "train it first"))))
    return models


def _registry(args):
    reg = {}
    mdir = _p(args, "models")
    if not os.path.isdir(mdir):
        return reg
    for name in sorted(os.listdir(mdir)):
        if not name.endswith(".json") or name.endswith(".manifest.json"):
            continue
        m = load_model(os.path.join(mdir, name))
        if m.kind in ("mlp", "rbfn") and m.metadata.get("method") == "longdist":
            reg[registry_key(m.kind, m.feature_set, m.metadata.get("registry_line", WILDCARD_LINE))] = m
    return reg


def cmd_evaluate(args) -> int:
    trips, inputs = _working_trips(args)
    train_trips, test_trips, train, test = _split(args, trips)
    paths = [s.strip() for s in (args.models or "").split(",") if s.strip()]
    if args.models is None and os.path.isdir(_p(args, "models")):
        paths = [_p(args, "models", n) for n in sorted(os.listdir(_p(args, "models")))
                 if n.endswith(".json") and not n.endswith(".manifest.json")]
    models = []
    for path, m in _load_models(args, paths):
        # a per-line model only answers queries on its own line
        line = m.metadata.get("registry_line", WILDCARD_LINE)
        if line not in (None, WILDCARD_LINE) and line != getattr(args, "line", None):
            if args.models is not None:
                raise UsageError(f"{path} was trained for line {line}; evaluate it with --line {line}")
            log.info("skipping %s: trained for line %s only", path, line)
            continue
        models.append((path, m))
    inputs += [p for p, _ in models]
    if not models and not args.baseline and not args.hybrid:
        raise UsageError("nothing to evaluate; give --models, --baseline timetable or --hybrid")
    table = load_dispatch(args.dispatch) if args.dispatch else DispatchTable()
    registry = _registry(args) if args.hybrid else {}
    fsets = {FeatureSet.BASIC}
    for _, m in models:
        fsets.add(m.feature_set if m.kind in ("mlp", "rbfn") else FeatureSet.BASIC)
    if args.baseline:
        fsets.add(FeatureSet.TIMETABLE)
    if args.hybrid:
        fsets |= {fs for _, fs in table.cells.values()}
    test_sets = _aligned_test_sets(args, sorted(fsets, key=lambda f: f.value), test_trips, train_trips, inputs)
    base = test_sets[FeatureSet.BASIC]
    tt = load_timetable_dir(args.dir)
    predictions = {}
    for path, m in models:
        name = os.path.splitext(os.path.basename(path))[0]
        if m.kind in ("mlp", "rbfn") and m.metadata.get("method") == "hop":
            n_stops = np.array([len(tt.pattern(line, "AB"[int(c)])) for line, c in zip(base["line"], base["direction"])])
            predictions[name] = predict_recursive(m, base, (base["dest_idx"] - base["origin_idx"]).to_numpy(),
                                                  n_stops)
        elif m.kind in ("mlp", "rbfn"):
            predictions[name] = predict(m, test_sets[m.feature_set])
        else:
            predictions[name] = predict(m, base, tt)
    if args.baseline:
        predictions["timetable"] = predict(timetable_model(), test_sets[FeatureSet.TIMETABLE])
    if args.hybrid:
        wide = base.copy()
        for fs, df in test_sets.items():
            for c in df.columns:
                if c not in wide.columns:
                    wide[c] = df[c].to_numpy()
        predictions["hybrid"], _ = hybrid_predict(registry, table, wide)
    spec = EvalSpec.preset(args.bands, args.buckets, args.signed_std)
    lengths = {line: len(tt.pattern(line, "A")) for line in tt.lines()}
    report = evaluate(predictions, base, spec, lengths)
    out = args.out or _p(args, "eval", args.name or "_".join(predictions))
    os.makedirs(out, exist_ok=True)
    report.write(os.path.join(out, "report.csv"), os.path.join(out, "curve.csv"))
    with open(os.path.join(out, "eval.json"), "w", encoding="utf-8") as fh:
        json.dump({"fingerprint": report.fingerprint, "models": report.models, "samples": len(base)},
                  fh, sort_keys=True, indent=2)
        fh.write("\n")
    write_manifest(args, out, inputs, {"train_dates": train, "test_dates": test})
    print(report.cells.to_string(index=False))
    print(f"-> {out}/report.csv, curve.csv")
    return EXIT_OK


def _read_report(path) -> EvalReport:
    meta_path = os.path.join(path, "eval.json")
    with open(_require(meta_path, "give directories written by `transit-eta evaluate`"), encoding="utf-8") as fh:
        meta = json.load(fh)
    return EvalReport(pd.read_csv(os.path.join(path, "report.csv")), pd.read_csv(os.path.join(path, "curve.csv")),
                      meta["fingerprint"], list(meta["models"]))


def cmd_compare(args) -> int:
    if len(args.reports) < 2:
        raise UsageError("compare needs at least two report directories")
    reports = [_read_report(p) for p in args.reports]
    table = compare(reports)
    out = args.out or _p(args, "eval", "comparison.csv")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    table.to_csv(out, index=False, lineterminator="\n", float_format="%.6f")
    write_manifest(args, out, [os.path.join(p, f) for p in args.reports for f in ("report.csv", "curve.csv")])
    print(table.to_string(index=False))
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(_require(args.model, "train it first"))
    ds = pd.read_csv(_require(args.dataset, "build it with `transit-eta build-dataset`"),
                     dtype={"line": str, "date": str, "vehicle_id": str})
    tt = load_timetable_dir(args.dir) if os.path.exists(_p(args, "stops.csv")) else None
    if args.recursive:
        if tt is None:
            raise UsageError("recursive prediction needs the timetable in --dir")
        n_stops = np.array([len(tt.pattern(line, "AB"[int(c)])) for line, c in zip(ds["line"], ds["direction"])])
        pred = predict_recursive(model, ds, (ds["dest_idx"] - ds["origin_idx"]).to_numpy(), n_stops)
    else:
        cols = list(model.columns) + [c for c in META_KEYS + ["label"] if c in ds.columns]
        if model.kind in ("mlp", "rbfn"):
            ds_in = ds[[c for c in cols if c in ds.columns]]
        else:
            ds_in = ds
        pred = predict(model, ds_in, tt)
    out = args.out or os.path.splitext(args.dataset)[0] + f".{model.model_id}.predictions.csv"
    res = ds[[c for c in META_KEYS if c in ds.columns]].copy()
    res["predicted_s"] = pred
    if "label" in ds.columns:
        res["label"] = ds["label"]
    res.to_csv(out, index=False, lineterminator="\n", float_format="%.6f")
    write_manifest(args, out, [args.model, args.dataset])
    print(f"{len(res)} predictions -> {out}")
    return EXIT_OK


def cmd_dispatch_check(args) -> int:
    table = load_dispatch(args.dispatch) if args.dispatch else DispatchTable()
    bad = 0
    print(f"{'group':<32} {'band':<5} {'model':<5} {'features':<10} status")
    for g in LineGroup:
        for b in BANDS:
            kind, fs = table.cells[(g, b)]
            ok = (kind, fs) == DEFAULT_CELLS[(g, b)]
            bad += not ok
            print(f"{g.name.lower():<32} {BAND_LABELS[b]:<5} {kind:<5} {fs.value:<10} {'ok' if ok else 'DIFFERS'}")
    print(f"{len(LineGroup) * len(BANDS) - bad} of {len(LineGroup) * len(BANDS)} cells match the built-in table")
    return EXIT_OK if bad == 0 else EXIT_DATA


# --- parser -------------------------------------------------------------------

def _common(p):
    p.add_argument("--dir", default=".", help="data directory (default: current directory)")
    p.add_argument("--config", help="JSON file of option defaults; command-line flags override it")
    p.add_argument("--log-level", default="WARNING")


def _dates(p):
    p.add_argument("--train-dates", help="comma-separated YYYY-MM-DD (default: same weekday, 3 prior weeks)")
    p.add_argument("--test-dates", help="comma-separated YYYY-MM-DD (default: last available date)")
    p.add_argument("--line", help="restrict to one line")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="transit-eta", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("harvest", help="poll a live vehicle-position endpoint into a ping CSV")
    _common(p)
    p.add_argument("--endpoint", required=True)
    p.add_argument("--interval", type=float, default=30.0)
    p.add_argument("--duration", type=float, default=3600.0)
    p.add_argument("--out")
    p.add_argument("--api-key")
    p.add_argument("--adapter", choices=sorted(ADAPTERS), default="simple")
    p.add_argument("--timeout", type=float, default=10.0)
    p.set_defaults(func=cmd_harvest)

    p = sub.add_parser("synth", help="generate a synthetic city with ground truth")
    _common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--lines", type=int, default=3)
    p.add_argument("--days", help="comma-separated dates (default: four consecutive Thursdays)")
    p.add_argument("--n-days", type=int, default=0, help="number of consecutive working days from --start-date")
    p.add_argument("--start-date", default="2021-03-08")
    p.add_argument("--noise-sigma", type=float, default=0.2)
    p.add_argument("--trip-sigma", type=float, default=0.0)
    p.add_argument("--segment-delay-sigma", type=float, default=0.0)
    p.add_argument("--glitch-rate", type=float, default=0.0)
    p.add_argument("--base-hop-s", type=float, default=90.0)
    p.add_argument("--headway-s", type=float, default=900.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="map-match pings into progress records and stop-event trips")
    _common(p)
    p.add_argument("--pings", help="ping CSV (default: <dir>/pings.csv)")
    p.add_argument("--at-stop-m", type=float, default=50.0)
    p.add_argument("--off-route-m", type=float, default=500.0)
    p.add_argument("--gap-s", type=float, default=900.0)
    p.set_defaults(func=cmd_preprocess)

    def _features(p, methods=("longdist", "hop")):
        p.add_argument("--features", choices=[f.value for f in FeatureSet], default="basic")
        p.add_argument("--method", choices=methods, default="longdist")
        p.add_argument("--extras", help=f"comma-separated optional features from {','.join(OPTIONAL_EXTRAS)}")

    p = sub.add_parser("build-dataset", help="write labelled train/test datasets")
    _common(p)
    _dates(p)
    _features(p)
    p.add_argument("--split", choices=("train", "test", "both"), default="both")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train", help="train an MLP or RBFN model")
    _common(p)
    _dates(p)
    _features(p)
    p.add_argument("--model", choices=("mlp", "rbfn"), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", default="12,32")
    p.add_argument("--activation", default="relu")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--centers", type=int, default=25)
    p.add_argument("--rbf-training", choices=("least_squares", "gradient"), default="least_squares")
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("build-ha", help="build a historical-average table")
    _common(p)
    _dates(p)
    p.add_argument("--selector", choices=("all_working_days", "same_weekday"), default="all_working_days")
    p.add_argument("--out")
    p.set_defaults(func=cmd_build_ha)

    p = sub.add_parser("predict", help="predict travel times for a dataset CSV")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--recursive", action="store_true", help="chain hop predictions (hop models)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="MAE/STD report by distance band and time bucket")
    _common(p)
    _dates(p)
    p.add_argument("--models", help="comma-separated model files (default: every model in <dir>/models)")
    p.add_argument("--baseline", choices=("timetable",))
    p.add_argument("--hybrid", action="store_true", help="also evaluate the dispatched hybrid over models/")
    p.add_argument("--dispatch", help="dispatch.csv overriding the built-in table")
    p.add_argument("--extras")
    p.add_argument("--bands", choices=sorted(BAND_PRESETS), default="tables")
    p.add_argument("--buckets", choices=sorted(BUCKET_PRESETS), default="tables")
    p.add_argument("--signed-std", action="store_true")
    p.add_argument("--name", help="report name under <dir>/eval/")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="compare evaluation reports on the same test set")
    _common(p)
    p.add_argument("reports", nargs="+", help="directories written by evaluate")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("dispatch-check", help="print and verify the hybrid dispatch table")
    _common(p)
    p.add_argument("--dispatch", help="dispatch.csv to check against the built-in table")
    p.set_defaults(func=cmd_dispatch_check)
    return parser


def _apply_config(parser, argv):
    """Re-parse with defaults taken from ``--config`` so explicit flags still win."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    unknown = sorted(k for k in (key.replace("-", "_") for key in cfg) if k not in known)
    if unknown:
        raise UsageError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
    sub.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"transit-eta: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergence as exc:
        print(f"transit-eta: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (DataError, FileNotFoundError) as exc:
        print(f"transit-eta: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TransitEtaError as exc:
        print(f"transit-eta: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
