"""Labelled travel-time datasets for the hop-by-hop and long-distance methods.

A dataset is a :class:`pandas.DataFrame` with one column per feature, the
``label`` column (seconds) and the meta columns in :data:`META_COLUMNS`.
Every sample is anchored at a stop event: the vehicle has just left stop
``origin_idx``, so ``next_stop_idx = origin_idx + 1`` and ``pct = 0``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Sequence

import numpy as np
import pandas as pd

from .errors import DataError
from .match import TripTrace
from .timetable import DIRECTIONS, Timetable

if TYPE_CHECKING:
    from .models.ha import HaTable

log = logging.getLogger(__name__)


class FeatureSet(str, Enum):
    BASIC = "basic"
    TIMETABLE = "timetable"
    HISTAVG = "histavg"


BASIC_COLUMNS = ["next_stop_idx", "tt_prev1", "tt_prev2", "tt_prev3", "pct",
                 "dest_stop_idx", "time_of_day", "direction"]
SET_EXTRAS = {
    FeatureSet.BASIC: [],
    FeatureSet.TIMETABLE: ["schedule_eta", "last_stop_delay"],
    FeatureSet.HISTAVG: ["ha_eta"],
}
OPTIONAL_EXTRAS = ("congestion", "bus_lane", "lights", "weather")
META_COLUMNS = ["line", "date", "vehicle_id", "origin_idx", "dest_idx", "depart_time"]
AUX_COLUMNS = ["line", "direction", "seq", "bus_lane", "lights"]


def feature_columns(feature_set: FeatureSet | str, extras: Sequence[str] = (),
                    weather_columns: Sequence[str] = ()) -> list[str]:
    """Ordered feature layout of ``feature_set`` plus the optional extras."""
    fs = FeatureSet(feature_set)
    cols = BASIC_COLUMNS + SET_EXTRAS[fs]
    for e in extras:
        if e not in OPTIONAL_EXTRAS:
            raise ValueError(f"unknown extra feature {e!r}; expected one of {OPTIONAL_EXTRAS}")
        cols += list(weather_columns) if e == "weather" else [e]
    return cols


def direction_code(direction: str) -> int:
    return DIRECTIONS.index(direction)


def load_segments_aux(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"line": str, "direction": str})
    if list(df.columns) != AUX_COLUMNS:
        raise DataError(f"{path}: expected columns {','.join(AUX_COLUMNS)}")
    return df


class CongestionIndex:
    """Answers "how many vehicles are on this segment at time t" from progress records.

    A vehicle is on the segment between pattern stops ``k`` and ``k + 1``
    while its latest record at or before ``t`` places it there and is not
    older than ``max_age_s``; at-stop records place a vehicle on no segment.
    Segments are identified by their pair of stop ids, so vehicles of every
    line sharing the segment are counted.
    """

    def __init__(self, progress: pd.DataFrame, timetable: Timetable, max_age_s: float = 120.0):
        self.max_age_s = max_age_s
        self._intervals: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]] = {}
        if len(progress) == 0:
            return
        df = progress.sort_values(["vehicle_id", "t"], kind="stable")
        t = df["t"].to_numpy(dtype=np.float64)
        same_next = np.r_[df["vehicle_id"].to_numpy()[1:] == df["vehicle_id"].to_numpy()[:-1], False]
        t_next = np.where(same_next, np.r_[t[1:], np.inf], np.inf)
        end = np.minimum(t_next, t + max_age_s + 1e-9)
        on_seg = ~df["at_stop"].to_numpy(dtype=bool)
        nxt = df["next_stop_idx"].to_numpy(dtype=np.int64)
        seg_a = np.empty(len(df), dtype=object)
        seg_b = np.empty(len(df), dtype=object)
        for (line, direction), rows in df.groupby(["line", "direction"], sort=False).indices.items():
            stops = np.asarray(timetable.pattern(line, direction).stops, dtype=object)
            k = nxt[rows]
            ok = (k >= 2) & (k <= len(stops))
            seg_a[rows[ok]] = stops[k[ok] - 2]
            seg_b[rows[ok]] = stops[k[ok] - 1]
        keep = on_seg & pd.notna(seg_a)
        frame = pd.DataFrame({"a": seg_a[keep], "b": seg_b[keep], "start": t[keep], "end": end[keep]})
        for key, g in frame.groupby(["a", "b"], sort=False):
            self._intervals[key] = (np.sort(g["start"].to_numpy()), np.sort(g["end"].to_numpy()))

    def count(self, stop_a: str, stop_b: str, t) -> np.ndarray:
        iv = self._intervals.get((stop_a, stop_b))
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if iv is None:
            return np.zeros(len(t), dtype=np.int64)
        starts, ends = iv
        return (np.searchsorted(starts, t, side="right") - np.searchsorted(ends, t, side="right")).astype(np.int64)


def congestion_count(progress: pd.DataFrame, timetable: Timetable, line: str, direction: str,
                     seq: int, t: float, max_age_s: float = 120.0) -> int:
    """Vehicles between stop ``seq`` and ``seq + 1`` of the pattern at time ``t``."""
    stops = timetable.pattern(line, direction).stops
    return int(CongestionIndex(progress, timetable, max_age_s).count(stops[seq - 1], stops[seq], t)[0])


@dataclass
class FeatureContext:
    """Side data the feature builders may need.

    ``timetable`` is required for the Timetable set (and as HA fallback),
    ``ha_table`` for the HistAvg set; the optional extras need
    ``segments_aux``, ``congestion`` or ``weather`` (a frame with a ``t``
    column of epoch seconds and numeric columns, joined as of departure).
    """

    timetable: Timetable | None = None
    ha_table: HaTable | None = None
    segments_aux: pd.DataFrame | None = None
    congestion: CongestionIndex | None = None
    weather: pd.DataFrame | None = None
    extras: tuple[str, ...] = ()

    def weather_columns(self) -> list[str]:
        if self.weather is None:
            return []
        return [c for c in self.weather.columns if c != "t"]


def _working(trip: TripTrace) -> bool:
    return (trip.day + 3) % 7 < 5


def _trip_rows(trip: TripTrace, i: np.ndarray, j: np.ndarray) -> dict[str, np.ndarray]:
    """Basic features, label and meta for origin events ``i`` and destination events ``j``."""
    hops = np.r_[0.0, trip.arrival[1:] - trip.departure[:-1]]   # hops[e] = hop ending at event e
    padded = np.r_[0.0, 0.0, 0.0, hops[1:]]                       # padded[e + 2] = hops[e], zeros before
    dep = trip.departure[i]
    n = len(i)
    return {
        "next_stop_idx": trip.stops[i] + 1,
        "tt_prev1": padded[i + 2],
        "tt_prev2": padded[i + 1],
        "tt_prev3": padded[i],
        "pct": np.zeros(n),
        "dest_stop_idx": trip.stops[j],
        "time_of_day": dep % 86400.0,
        "direction": np.full(n, direction_code(trip.direction), dtype=np.int64),
        "label": trip.arrival[j] - dep,
        "line": np.full(n, trip.line, dtype=object),
        "date": np.full(n, trip.date, dtype=object),
        "vehicle_id": np.full(n, trip.vehicle_id, dtype=object),
        "origin_idx": trip.stops[i],
        "dest_idx": trip.stops[j],
        "depart_time": dep,
    }


def _add_timetable(df: pd.DataFrame, tt: Timetable) -> np.ndarray:
    """Fill schedule_eta and last_stop_delay; returns the mask of rows that have a scheduled run."""
    eta = np.full(len(df), np.nan)
    delay = np.full(len(df), np.nan)
    for (line, code, origin), rows in df.groupby(["line", "direction", "origin_idx"], sort=False).indices.items():
        d = DIRECTIONS[int(code)]
        tod = df["time_of_day"].to_numpy()[rows]
        runs, sched_dep, ok = tt.schedule.nearest_runs(line, d, int(origin), tod)
        run_ids, times = _run_matrix(tt, line, d)
        r = np.searchsorted(run_ids, runs)
        dest = df["dest_idx"].to_numpy()[rows]
        arr = times[np.clip(r, 0, len(run_ids) - 1), dest - 1] if len(run_ids) else np.full(len(rows), np.nan)
        ok &= np.isfinite(arr)
        eta[rows] = np.where(ok, arr - sched_dep, np.nan)
        delay[rows] = np.where(ok, tod - sched_dep, np.nan)
    df["schedule_eta"] = eta
    df["last_stop_delay"] = delay
    return np.isfinite(eta)


_RUN_MATRIX_CACHE: dict = {}


def _run_matrix(tt: Timetable, line, direction):
    key = (id(tt.schedule), line, direction)
    if key not in _RUN_MATRIX_CACHE:
        if len(_RUN_MATRIX_CACHE) > 256:
            _RUN_MATRIX_CACHE.clear()
        _RUN_MATRIX_CACHE[key] = tt.schedule.run_matrix(line, direction, len(tt.pattern(line, direction)))
    return _RUN_MATRIX_CACHE[key]


def _add_ha(df: pd.DataFrame, ctx: FeatureContext) -> None:
    from .models.ha import ha_predict_many

    out = np.empty(len(df))
    sched = ctx.timetable.schedule if ctx.timetable is not None else None
    for (line, code), rows in df.groupby(["line", "direction"], sort=False).indices.items():
        v, _ = ha_predict_many(ctx.ha_table, line, DIRECTIONS[int(code)], df["origin_idx"].to_numpy()[rows],
                               df["dest_idx"].to_numpy()[rows], df["depart_time"].to_numpy()[rows], sched)
        out[rows] = v
    df["ha_eta"] = out


def _add_segment_aux(df: pd.DataFrame, aux: pd.DataFrame) -> None:
    """Bus-lane segment count and signal count summed over the travelled segments."""
    lanes = np.zeros(len(df))
    lights = np.zeros(len(df))
    aux = aux.assign(direction_code=aux["direction"].map(direction_code))
    for (line, code), g in aux.groupby(["line", "direction_code"], sort=False):
        g = g.sort_values("seq")
        n = int(g["seq"].max()) + 1
        cl = np.zeros(n + 1)
        cs = np.zeros(n + 1)
        cl[g["seq"].to_numpy()] = g["bus_lane"].to_numpy()
        cs[g["seq"].to_numpy()] = g["lights"].to_numpy()
        cl, cs = np.cumsum(cl), np.cumsum(cs)
        m = ((df["line"] == line) & (df["direction"] == code)).to_numpy()
        if not m.any():
            continue
        o = np.clip(df["origin_idx"].to_numpy()[m] - 1, 0, n)
        d = np.clip(df["dest_idx"].to_numpy()[m] - 1, 0, n)
        lanes[m] = cl[d] - cl[o]
        lights[m] = cs[d] - cs[o]
    df["bus_lane"] = lanes
    df["lights"] = lights


def _add_congestion(df: pd.DataFrame, ctx: FeatureContext) -> None:
    out = np.zeros(len(df), dtype=np.int64)
    tt = ctx.timetable
    for (line, code, origin), rows in df.groupby(["line", "direction", "origin_idx"], sort=False).indices.items():
        stops = tt.pattern(line, DIRECTIONS[int(code)]).stops
        if origin < len(stops):
            out[rows] = ctx.congestion.count(stops[origin - 1], stops[origin], df["depart_time"].to_numpy()[rows])
    df["congestion"] = out


def _add_weather(df: pd.DataFrame, weather: pd.DataFrame) -> pd.DataFrame:
    w = weather.sort_values("t").rename(columns={"t": "depart_time"})
    w["depart_time"] = w["depart_time"].astype(np.float64)
    order = np.argsort(df["depart_time"].to_numpy(), kind="stable")
    merged = pd.merge_asof(df.iloc[order].reset_index().sort_values("depart_time", kind="stable"),
                           w, on="depart_time", direction="backward")
    merged = merged.set_index("index").sort_index()
    merged.index.name = None
    return merged.fillna({c: 0.0 for c in w.columns if c != "depart_time"})


def _build(trips: Sequence[TripTrace], feature_set, ctx: FeatureContext | None, pairs) -> pd.DataFrame:
    fs = FeatureSet(feature_set)
    ctx = ctx or FeatureContext()
    cols = feature_columns(fs, ctx.extras, ctx.weather_columns())
    kept = sorted((tr for tr in trips if len(tr) >= 2 and _working(tr)),
                  key=lambda tr: (tr.line, tr.date, tr.vehicle_id, float(tr.departure[0])))
    parts = [_trip_rows(tr, *pairs(len(tr))) for tr in kept]
    if parts:
        df = pd.DataFrame({k: np.concatenate([p[k] for p in parts]) for k in parts[0]})
    else:
        df = pd.DataFrame({c: pd.Series(dtype=np.float64) for c in BASIC_COLUMNS + ["label"] + META_COLUMNS})
    if len(df) == 0:
        for c in cols:
            if c not in df:
                df[c] = pd.Series(dtype=np.float64)
        return df[cols + ["label"] + META_COLUMNS]
    keep = np.ones(len(df), dtype=bool)
    if fs is FeatureSet.TIMETABLE:
        if ctx.timetable is None:
            raise ValueError("the timetable feature set needs a timetable")
        keep &= _add_timetable(df, ctx.timetable)
    if fs is FeatureSet.HISTAVG:
        if ctx.ha_table is None:
            raise ValueError("the histavg feature set needs an HA table")
        _add_ha(df, ctx)
    if "bus_lane" in ctx.extras or "lights" in ctx.extras:
        if ctx.segments_aux is None:
            raise ValueError("bus_lane/lights features need segments_aux")
        _add_segment_aux(df, ctx.segments_aux)
    if "congestion" in ctx.extras:
        if ctx.congestion is None or ctx.timetable is None:
            raise ValueError("the congestion feature needs progress records and a timetable")
        _add_congestion(df, ctx)
    if "weather" in ctx.extras and ctx.weather is not None:
        df = _add_weather(df, ctx.weather)
    keep &= df["label"].to_numpy() > 0
    if not keep.all():
        log.info("dropped %d of %d samples lacking a scheduled run or a positive label",
                 int((~keep).sum()), len(df))
    return df.loc[keep, cols + ["label"] + META_COLUMNS].reset_index(drop=True)


def _hop_pairs(n):
    i = np.arange(n - 1)
    return i, i + 1


def _all_pairs(n):
    return np.triu_indices(n, k=1)


def build_hop_dataset(trips: Sequence[TripTrace], feature_set=FeatureSet.BASIC,
                      ctx: FeatureContext | None = None) -> pd.DataFrame:
    """One sample per consecutive pair of stop events of every working-day trip."""
    return _build(trips, feature_set, ctx, _hop_pairs)


def build_longdist_dataset(trips: Sequence[TripTrace], feature_set=FeatureSet.BASIC,
                           ctx: FeatureContext | None = None) -> pd.DataFrame:
    """One sample per ordered pair (origin event, later event) of every working-day trip."""
    return _build(trips, feature_set, ctx, _all_pairs)


def write_dataset(path, df: pd.DataFrame) -> None:
    df.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")


def read_dataset(path) -> pd.DataFrame:
    return pd.read_csv(path, dtype={"line": str, "date": str, "vehicle_id": str})
