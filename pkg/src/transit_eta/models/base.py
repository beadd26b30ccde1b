"""Trained-model container, prediction strategies and the JSON model file."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd

from ..errors import BeyondRoute, DataError, LayoutMismatch, NoScheduledRun
from ..features import BASIC_COLUMNS, META_COLUMNS, FeatureSet, feature_columns
from ..timetable import DIRECTIONS, Timetable
from .ha import HA_COLUMNS, HaTable, ha_predict_many
from .mlp import MlpConfig, MlpFit, train_mlp
from .rbfn import RbfnConfig, RbfnFit, RbfnParams, train_rbfn
from .scaler import Scaler

MODEL_FORMAT = "transit-eta-model/1"
KINDS = ("mlp", "rbfn", "ha", "timetable")
MIN_PREDICTION_S = 1.0
_NON_FEATURES = set(META_COLUMNS) | {"label"}


@dataclass
class TrainedModel:
    """A fitted predictor and everything needed to apply it.

    ``impl`` is an :class:`MlpFit`, :class:`RbfnFit` or :class:`HaTable`;
    the timetable baseline has none.
    """

    kind: str
    feature_set: FeatureSet
    columns: list[str]
    impl: Any = None
    metadata: dict = field(default_factory=dict)

    @property
    def model_id(self) -> str:
        return f"{self.kind}+{self.feature_set.value}"


def _feature_matrix(model: TrainedModel, X) -> np.ndarray:
    if isinstance(X, pd.DataFrame):
        present = [c for c in X.columns if c not in _NON_FEATURES]
        if sorted(present) != sorted(model.columns):
            raise LayoutMismatch(f"{model.model_id} expects features {model.columns}, got {present}")
        return X[model.columns].to_numpy(dtype=np.float64)
    A = np.asarray(X, dtype=np.float64)
    if A.ndim == 1:
        A = A[None, :]
    if A.shape[1] != len(model.columns):
        raise LayoutMismatch(f"{model.model_id} expects {len(model.columns)} features, got {A.shape[1]}")
    return A


def _need_meta(X, kind):
    if not isinstance(X, pd.DataFrame) or not set(META_COLUMNS + ["direction"]) <= set(X.columns):
        raise LayoutMismatch(f"{kind} predictions need a dataset frame with meta columns {META_COLUMNS}")


def _schedule_eta(X: pd.DataFrame, tt: Timetable) -> np.ndarray:
    out = np.full(len(X), np.nan)
    idx = X.reset_index(drop=True)
    for (line, code, origin), rows in idx.groupby(["line", "direction", "origin_idx"], sort=False).indices.items():
        d = DIRECTIONS[int(code)]
        tod = idx["depart_time"].to_numpy(dtype=np.float64)[rows] % 86400.0
        runs, dep, ok = tt.schedule.nearest_runs(line, d, int(origin), tod)
        run_ids, times = tt.schedule.run_matrix(line, d, len(tt.pattern(line, d)))
        if len(run_ids) == 0 or not np.all(ok):
            raise NoScheduledRun(f"no scheduled run of {line}/{d} near some departures from stop {origin}")
        arr = times[np.searchsorted(run_ids, runs), idx["dest_idx"].to_numpy()[rows] - 1]
        out[rows] = arr - dep
    if np.any(~np.isfinite(out)):
        raise NoScheduledRun("schedule lacks the destination stop for some queries")
    return out


def predict(model: TrainedModel, X, timetable: Timetable | None = None) -> np.ndarray:
    """Predicted travel seconds for every row of ``X``, floored at one second.

    MLP and RBFN models read their feature columns; HA and timetable models
    read the meta columns (``line``, ``origin_idx``, ``dest_idx``,
    ``depart_time``) and the ``direction`` code. The timetable baseline uses
    the ``schedule_eta`` column when present, otherwise ``timetable``.
    """
    if model.kind in ("mlp", "rbfn"):
        raw = model.impl.predict(_feature_matrix(model, X))
    elif model.kind == "ha":
        _need_meta(X, "HA")
        raw = np.empty(len(X))
        sched = timetable.schedule if timetable is not None else None
        Xr = X.reset_index(drop=True)
        for (line, code), rows in Xr.groupby(["line", "direction"], sort=False).indices.items():
            raw[rows], _ = ha_predict_many(model.impl, line, DIRECTIONS[int(code)],
                                           Xr["origin_idx"].to_numpy()[rows], Xr["dest_idx"].to_numpy()[rows],
                                           Xr["depart_time"].to_numpy()[rows], sched)
    elif model.kind == "timetable":
        if isinstance(X, pd.DataFrame) and "schedule_eta" in X.columns:
            raw = X["schedule_eta"].to_numpy(dtype=np.float64)
        else:
            _need_meta(X, "timetable")
            if timetable is None:
                raise DataError("the timetable baseline needs schedule_eta or a timetable")
            raw = _schedule_eta(X, timetable)
    else:
        raise ValueError(f"unknown model kind {model.kind!r}")
    return np.maximum(raw, MIN_PREDICTION_S)


def predict_longdist(model: TrainedModel, query, timetable: Timetable | None = None) -> np.ndarray:
    """Single evaluation of a model trained on the long-distance dataset."""
    return predict(model, query, timetable)


def predict_recursive(hop_model: TrainedModel, query: pd.DataFrame, k, n_stops) -> np.ndarray:
    """Chain ``k`` single-hop predictions from each query row and return their sum.

    After each hop the predicted time becomes ``tt_prev1`` (older values
    shift back), ``next_stop_idx`` advances by one, ``time_of_day`` advances
    by the prediction and ``pct`` resets to 0. Each hop is floored at one
    second. Only Basic-feature hop models can be chained, since the other
    feature sets would need future schedule and HA lookups per hop.
    """
    if hop_model.kind not in ("mlp", "rbfn") or hop_model.columns != BASIC_COLUMNS:
        raise LayoutMismatch("recursive prediction needs an MLP or RBFN hop model on basic features")
    q = query[BASIC_COLUMNS].to_numpy(dtype=np.float64).copy() if isinstance(query, pd.DataFrame) \
        else np.atleast_2d(np.asarray(query, dtype=np.float64)).copy()
    if q.shape[1] != len(BASIC_COLUMNS):
        raise LayoutMismatch(f"expected {len(BASIC_COLUMNS)} basic features, got {q.shape[1]}")
    n = len(q)
    k = np.broadcast_to(np.asarray(k, dtype=np.int64), (n,))
    n_stops = np.broadcast_to(np.asarray(n_stops, dtype=np.int64), (n,))
    if np.any(k < 1):
        raise ValueError("hop count k must be >= 1")
    col = {c: i for i, c in enumerate(BASIC_COLUMNS)}
    if np.any(q[:, col["next_stop_idx"]] + k - 1 > n_stops):
        raise BeyondRoute("hop count runs past the end of the route")
    total = np.zeros(n)
    for h in range(int(k.max()) if n else 0):
        active = h < k
        rows = q[active]
        rows[:, col["dest_stop_idx"]] = rows[:, col["next_stop_idx"]]
        hop = np.maximum(hop_model.impl.predict(rows), MIN_PREDICTION_S)
        total[active] += hop
        rows[:, col["tt_prev3"]] = rows[:, col["tt_prev2"]]
        rows[:, col["tt_prev2"]] = rows[:, col["tt_prev1"]]
        rows[:, col["tt_prev1"]] = hop
        rows[:, col["next_stop_idx"]] += 1
        rows[:, col["time_of_day"]] = (rows[:, col["time_of_day"]] + hop) % 86400.0
        rows[:, col["pct"]] = 0.0
        q[active] = rows
    return total


# --- training -------------------------------------------------------------

def _metadata(dataset: pd.DataFrame, seed, extra=None) -> dict:
    md = {
        "lines": sorted(map(str, dataset["line"].unique())) if "line" in dataset else [],
        "dates": sorted(map(str, dataset["date"].unique())) if "date" in dataset else [],
        "n_samples": int(len(dataset)),
        "seed": seed,
    }
    md.update(extra or {})
    return md


def train_model(kind: str, feature_set, dataset: pd.DataFrame, config=None) -> TrainedModel:
    """Fit an MLP or RBFN on a dataset frame (feature columns + ``label``)."""
    fs = FeatureSet(feature_set)
    columns = [c for c in dataset.columns if c not in _NON_FEATURES]
    base = feature_columns(fs)
    if columns[:len(base)] != base:
        raise LayoutMismatch(f"dataset columns {columns} do not start with the {fs.value} layout {base}")
    X = dataset[columns].to_numpy(dtype=np.float64)
    y = dataset["label"].to_numpy(dtype=np.float64)
    if kind == "mlp":
        config = config or MlpConfig()
        fit = train_mlp(config, X, y)
        extra = {"config": _mlp_config_dict(config), "final_loss": fit.final_loss}
    elif kind == "rbfn":
        config = config or RbfnConfig()
        fit = train_rbfn(config, X, y)
        extra = {"config": _rbfn_config_dict(config), "final_loss": fit.final_loss}
    else:
        raise ValueError(f"cannot train kind {kind!r}; use build_ha for HA models")
    return TrainedModel(kind, fs, columns, fit, _metadata(dataset, config.seed, extra))


def ha_model(table: HaTable, metadata: dict | None = None) -> TrainedModel:
    return TrainedModel("ha", FeatureSet.BASIC, [], table, dict(metadata or {}, selector=table.selector))


def timetable_model() -> TrainedModel:
    return TrainedModel("timetable", FeatureSet.TIMETABLE, [], None, {})


def _mlp_config_dict(c: MlpConfig) -> dict:
    return {"hidden_layers": list(c.hidden_layers), "activations": list(c.activations),
            "learning_rate": c.learning_rate, "momentum": c.momentum, "epochs": c.epochs,
            "batch_size": c.batch_size, "seed": c.seed}


def _rbfn_config_dict(c: RbfnConfig) -> dict:
    beta = c.beta_init if c.beta_init is None or np.isscalar(c.beta_init) else list(c.beta_init)
    return {"M": c.M, "beta_init": beta, "width_scale": c.width_scale, "seed": c.seed, "training": c.training, "ridge": c.ridge,
            "kmeans_iter": c.kmeans_iter, "epochs": c.epochs, "learning_rate": c.learning_rate,
            "batch_size": c.batch_size}


# --- model files ------------------------------------------------------------

def _arr(a) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def model_to_dict(model: TrainedModel) -> dict:
    doc: dict = {"format": MODEL_FORMAT, "kind": model.kind, "feature_set": model.feature_set.value,
                 "columns": list(model.columns), "metadata": model.metadata}
    m = model.impl
    if model.kind == "mlp":
        doc["scaler"] = m.scaler.to_dict()
        doc["parameters"] = {"weights": [_arr(p) for p in m.params], "activations": list(m.activations),
                             "y_mean": m.y_mean, "y_std": m.y_std, "loss_history": list(m.loss_history),
                             "final_loss": m.final_loss}
    elif model.kind == "rbfn":
        doc["scaler"] = m.scaler.to_dict()
        p = m.params
        doc["parameters"] = {"centers": _arr(p.centers), "beta": _arr(p.beta), "weights": _arr(p.weights),
                             "bias": p.bias, "loss_history": list(m.loss_history), "final_loss": m.final_loss}
    elif model.kind == "ha":
        cells = m.cells
        doc["parameters"] = {"selector": m.selector,
                             "cells": {c: (cells[c].astype(str).tolist() if c in ("line", "direction", "day_class")
                                           else cells[c].tolist()) for c in HA_COLUMNS}}
    return doc


def model_from_dict(doc: dict) -> TrainedModel:
    if doc.get("format") != MODEL_FORMAT:
        raise DataError(f"unsupported model format {doc.get('format')!r}; expected {MODEL_FORMAT}")
    kind = doc["kind"]
    fs = FeatureSet(doc["feature_set"])
    p = doc.get("parameters", {})
    if kind == "mlp":
        impl = MlpFit([np.asarray(w, dtype=np.float64) for w in p["weights"]], Scaler.from_dict(doc["scaler"]),
                      p["y_mean"], p["y_std"], tuple(p["activations"]), list(p["loss_history"]), p["final_loss"])
    elif kind == "rbfn":
        impl = RbfnFit(RbfnParams(np.asarray(p["centers"], dtype=np.float64), np.asarray(p["beta"], dtype=np.float64),
                                  np.asarray(p["weights"], dtype=np.float64), float(p["bias"])),
                       Scaler.from_dict(doc["scaler"]), p["final_loss"], list(p["loss_history"]))
        if impl.params.centers.ndim == 1:
            impl.params.centers = impl.params.centers.reshape(len(impl.params.beta), -1)
    elif kind == "ha":
        cells = pd.DataFrame(p["cells"])
        for c in ("bucket", "origin", "dest", "count"):
            cells[c] = cells[c].astype(np.int64)
        cells["mean_s"] = cells["mean_s"].astype(np.float64)
        impl = HaTable(p["selector"], cells)
    elif kind == "timetable":
        impl = None
    else:
        raise DataError(f"unknown model kind {kind!r}")
    return TrainedModel(kind, fs, list(doc["columns"]), impl, doc.get("metadata", {}))


def save_model(path, model: TrainedModel) -> None:
    """Write a deterministic JSON model file (sorted keys, no timestamps)."""
    text = json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"), allow_nan=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def load_model(path) -> TrainedModel:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
