"""MAE/STD evaluation by distance band and departure-time bucket, and method comparison."""
from __future__ import annotations

import hashlib
import math
import statistics
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import EmptyInput, MismatchedTestSets

REPORT_COLUMNS = ["model", "band", "bucket", "mae_s", "std_s", "n"]
CURVE_COLUMNS = ["model", "distance_stops", "mae_s", "n", "route_end_marker"]

BAND_PRESETS = {
    "tables": ((1, 3), (4, 8), (9, 15), (16, 20), (21, 27)),
    "figures": ((1, 5), (6, 15), (16, 25)),
}
BUCKET_PRESETS = {
    "tables": ((7, 10), (10, 14), (14, 19), (19, 23)),
    "rush": ((7, 10), (15, 19)),
}


def mae_std(predicted, actual, signed_std: bool = False) -> tuple[float, float]:
    """Mean absolute error and population standard deviation of the absolute errors.

    Both are computed in exact rational arithmetic and rounded once, so the
    result does not depend on sample order. With ``signed_std`` the spread is
    taken over the signed errors instead.
    """
    p = np.asarray(predicted, dtype=np.float64).ravel()
    a = np.asarray(actual, dtype=np.float64).ravel()
    if len(p) != len(a):
        raise ValueError("predicted and actual differ in length")
    if len(p) == 0:
        raise EmptyInput("mae_std needs at least one (predicted, actual) pair")
    err = p - a
    absolute = np.abs(err).tolist()
    mae = statistics.mean(absolute)
    spread = err.tolist() if signed_std else absolute
    std = math.sqrt(statistics.pvariance(spread)) if len(spread) > 1 else 0.0
    return float(mae), float(std)


def _label(lo, hi) -> str:
    return f"{lo}-{hi}"


@dataclass(frozen=True)
class EvalSpec:
    """Distance bands (inclusive stop counts) and departure buckets (``[lo, hi)`` hours)."""

    bands: tuple[tuple[int, int], ...] = BAND_PRESETS["tables"]
    buckets: tuple[tuple[float, float], ...] = BUCKET_PRESETS["tables"]
    signed_std: bool = False

    def __post_init__(self):
        if any(lo > hi for lo, hi in self.bands) or any(lo >= hi for lo, hi in self.buckets):
            raise ValueError("band and bucket bounds must be increasing")
        # bands are inclusive on both ends, buckets half-open
        if any(hi >= lo2 for (_, hi), (lo2, _) in zip(self.bands, self.bands[1:])):
            raise ValueError(f"bands must be ordered and disjoint: {self.bands}")
        if any(hi > lo2 for (_, hi), (lo2, _) in zip(self.buckets, self.buckets[1:])):
            raise ValueError(f"buckets must be ordered and disjoint: {self.buckets}")

    @classmethod
    def preset(cls, bands: str = "tables", buckets: str = "tables", signed_std: bool = False) -> "EvalSpec":
        return cls(BAND_PRESETS[bands], BUCKET_PRESETS[buckets], signed_std)

    def band_index(self, distance) -> np.ndarray:
        d = np.asarray(distance)
        out = np.full(d.shape, -1, dtype=np.int64)
        for k, (lo, hi) in enumerate(self.bands):
            out[(d >= lo) & (d <= hi)] = k
        return out

    def bucket_index(self, depart_time) -> np.ndarray:
        h = (np.asarray(depart_time, dtype=np.float64) % 86400.0) / 3600.0
        out = np.full(h.shape, -1, dtype=np.int64)
        for k, (lo, hi) in enumerate(self.buckets):
            out[(h >= lo) & (h < hi)] = k
        return out


def sample_fingerprint(samples: pd.DataFrame) -> str:
    """Order-independent digest of the sample identities and labels."""
    cols = [c for c in ("line", "date", "vehicle_id", "origin_idx", "dest_idx", "depart_time", "label")
            if c in samples.columns]
    rows = sorted(map(repr, samples[cols].itertuples(index=False, name=None)))
    return hashlib.sha256("\n".join(rows).encode()).hexdigest()


@dataclass
class EvalReport:
    cells: pd.DataFrame
    curve: pd.DataFrame
    fingerprint: str = ""
    models: list[str] = field(default_factory=list)

    def write(self, report_path, curve_path=None) -> None:
        self.cells.to_csv(report_path, index=False, lineterminator="\n", float_format="%.6f")
        if curve_path is not None:
            self.curve.to_csv(curve_path, index=False, lineterminator="\n", float_format="%.6f")


def route_end_distances(route_lengths: Mapping[str, int]) -> set[int]:
    """Distances (in stops) at which some line's route ends: its stop count minus one."""
    return {int(n) - 1 for n in route_lengths.values()}


def evaluate(predictions: Mapping[str, np.ndarray], samples: pd.DataFrame, spec: EvalSpec | None = None,
             route_lengths: Mapping[str, int] | None = None) -> EvalReport:
    """Cell-wise MAE/STD of each model's predictions over ``samples``.

    ``predictions`` maps a model id to predicted seconds aligned with the rows
    of ``samples`` (which must carry ``label``, ``origin_idx``, ``dest_idx``
    and ``depart_time``). Samples outside every band or bucket are left out;
    empty cells are omitted. ``route_lengths`` (stops per line) drives the
    route-end markers of the distance curve; by default it is inferred as
    the largest destination index seen per line.
    """
    spec = spec or EvalSpec()
    dist = (samples["dest_idx"] - samples["origin_idx"]).to_numpy()
    band = spec.band_index(dist)
    bucket = spec.bucket_index(samples["depart_time"].to_numpy())
    actual = samples["label"].to_numpy(dtype=np.float64)
    if route_lengths is None:
        route_lengths = samples.groupby("line")["dest_idx"].max().to_dict() if len(samples) else {}
    ends = route_end_distances(route_lengths)
    rows, curve = [], []
    for model_id, pred in predictions.items():
        pred = np.asarray(pred, dtype=np.float64)
        if len(pred) != len(samples):
            raise ValueError(f"{model_id}: {len(pred)} predictions for {len(samples)} samples")
        for bi, (blo, bhi) in enumerate(spec.bands):
            for ki, (klo, khi) in enumerate(spec.buckets):
                m = (band == bi) & (bucket == ki)
                if m.any():
                    mae, std = mae_std(pred[m], actual[m], spec.signed_std)
                    rows.append((model_id, _label(blo, bhi), _label(klo, khi), mae, std, int(m.sum())))
        in_scope = (band >= 0) & (bucket >= 0)
        for d in np.unique(dist[in_scope]):
            m = in_scope & (dist == d)
            mae, _ = mae_std(pred[m], actual[m])
            curve.append((model_id, int(d), mae, int(m.sum()), int(int(d) in ends)))
    return EvalReport(pd.DataFrame(rows, columns=REPORT_COLUMNS), pd.DataFrame(curve, columns=CURVE_COLUMNS),
                      sample_fingerprint(samples), list(predictions))


def compare(reports: Sequence[EvalReport]) -> pd.DataFrame:
    """Per-distance MAE of every model side by side.

    Columns: ``distance_stops``, one ``mae_<model>`` column per model,
    ``delta_<model>`` (difference to the first model), ``best`` and
    ``route_end_marker``. Reports must come from the same test set.
    """
    if len(reports) < 2:
        raise ValueError("compare needs at least two reports")
    fp = {r.fingerprint for r in reports}
    if len(fp) != 1:
        raise MismatchedTestSets("reports were computed on different test sets")
    curve = pd.concat([r.curve for r in reports], ignore_index=True)
    models = list(dict.fromkeys(m for r in reports for m in r.models))
    wide = curve.pivot_table(index="distance_stops", columns="model", values="mae_s", aggfunc="first")
    marker = curve.groupby("distance_stops")["route_end_marker"].max()
    out = pd.DataFrame({"distance_stops": wide.index.to_numpy()})
    for m in models:
        out[f"mae_{m}"] = wide[m].to_numpy() if m in wide.columns else np.nan
    first = out[f"mae_{models[0]}"]
    for m in models:
        out[f"delta_{m}"] = out[f"mae_{m}"] - first
    maes = out[[f"mae_{m}" for m in models]].to_numpy()
    out["best"] = [models[int(np.nanargmin(r))] if np.isfinite(r).any() else "" for r in maes]
    out["route_end_marker"] = marker.reindex(wide.index).to_numpy().astype(np.int64)
    return out
