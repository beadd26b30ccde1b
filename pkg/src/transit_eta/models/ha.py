"""Historical-average travel times keyed by departure bucket and origin stop."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import pandas as pd

from ..errors import NoDataAnywhere
from ..match import TripTrace
from ..timetable import Schedule

BUCKET_S = 1200
N_BUCKETS = 72
SELECTORS = ("all_working_days", "same_weekday")
WEEKDAYS = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")
HA_COLUMNS = ["line", "direction", "day_class", "bucket", "origin", "dest", "mean_s", "count"]


def bucket_of(t) -> np.ndarray:
    """20-minute bucket index of epoch (or since-midnight) seconds."""
    return (np.asarray(t, dtype=np.float64) % 86400.0 // BUCKET_S).astype(np.int64)


def day_class_of(t, selector: str) -> np.ndarray:
    """Day class of epoch seconds under ``selector``."""
    days = np.asarray(t, dtype=np.float64) // 86400.0
    wd = ((days.astype(np.int64) + 3) % 7)   # 1970-01-01 was a Thursday
    if selector == "all_working_days":
        return np.where(wd < 5, "working", "weekend").astype(object)
    if selector == "same_weekday":
        return np.asarray(WEEKDAYS, dtype=object)[wd]
    raise ValueError(f"unknown day selector {selector!r}; expected one of {SELECTORS}")


class HaEstimate(NamedTuple):
    seconds: float
    fallback: bool


@dataclass
class HaTable:
    """Mean departure-to-arrival times per (line, direction, day class, bucket, origin, dest).

    Only populated cells are stored; a missing cell has count 0 and no mean.
    """

    selector: str
    cells: pd.DataFrame
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.cells = self.cells[HA_COLUMNS].reset_index(drop=True)
        idx = {}
        c = self.cells.sort_values(["line", "direction", "day_class", "origin", "dest", "bucket"], kind="stable")
        key_cols = ["line", "direction", "day_class", "origin", "dest"]
        bucket = c["bucket"].to_numpy(dtype=np.int64)
        mean = c["mean_s"].to_numpy(dtype=np.float64)
        count = c["count"].to_numpy(dtype=np.int64)
        keys = list(zip(*(c[k].tolist() for k in key_cols)))
        start = [i for i in range(len(keys)) if i == 0 or keys[i] != keys[i - 1]]
        for a, b in zip(start, start[1:] + [len(keys)]):
            idx[keys[a]] = (bucket[a:b], mean[a:b], count[a:b])
        self._index = idx

    def __len__(self):
        return len(self.cells)

    def lookup(self, line, direction, day_class, bucket, origin, dest) -> tuple[float, int]:
        """``(mean, count)`` of one cell; ``(nan, 0)`` when empty."""
        e = self._index.get((line, direction, day_class, int(origin), int(dest)))
        if e is not None:
            j = np.searchsorted(e[0], bucket)
            if j < len(e[0]) and e[0][j] == bucket:
                return float(e[1][j]), int(e[2][j])
        return math.nan, 0

    def cell(self, line, direction, day_class, bucket, origin) -> dict[int, tuple[float, int]]:
        """Every downstream stop of one (bucket, origin) cell: ``{dest: (mean, count)}``."""
        c = self.cells
        m = ((c["line"] == line) & (c["direction"] == direction) & (c["day_class"] == day_class)
             & (c["bucket"] == bucket) & (c["origin"] == origin))
        return {int(d): (float(mu), int(n)) for d, mu, n in
                c.loc[m, ["dest", "mean_s", "count"]].itertuples(index=False)}


def pair_frame(trips: Sequence[TripTrace]) -> pd.DataFrame:
    """All (origin event, downstream event) pairs of ``trips`` with their travel time."""
    parts = []
    for tr in trips:
        n = len(tr.stops)
        if n < 2:
            continue
        i, j = np.triu_indices(n, k=1)
        parts.append((tr.line, tr.direction, tr.departure[i], tr.stops[i], tr.stops[j],
                      tr.arrival[j] - tr.departure[i]))
    if not parts:
        return pd.DataFrame({"line": [], "direction": [], "depart": [], "origin": [], "dest": [], "value": []})
    lens = [len(p[2]) for p in parts]
    return pd.DataFrame({
        "line": np.repeat([p[0] for p in parts], lens),
        "direction": np.repeat([p[1] for p in parts], lens),
        "depart": np.concatenate([p[2] for p in parts]),
        "origin": np.concatenate([p[3] for p in parts]).astype(np.int64),
        "dest": np.concatenate([p[4] for p in parts]).astype(np.int64),
        "value": np.concatenate([p[5] for p in parts]),
    })


def build_ha(trips: Sequence[TripTrace], day_selector: str = "all_working_days") -> HaTable:
    """Average travel time from each origin stop to every downstream stop.

    Samples are grouped by the departure bucket at the origin and by day
    class; ``same_weekday`` keys the table by weekday name, so a table built
    from several Thursdays answers Thursday queries only.
    """
    if day_selector not in SELECTORS:
        raise ValueError(f"unknown day selector {day_selector!r}; expected one of {SELECTORS}")
    pf = pair_frame(trips)
    if len(pf) == 0:
        return HaTable(day_selector, pd.DataFrame({c: [] for c in HA_COLUMNS}))
    pf["day_class"] = day_class_of(pf["depart"].to_numpy(), day_selector)
    pf["bucket"] = bucket_of(pf["depart"].to_numpy())
    keys = ["line", "direction", "day_class", "bucket", "origin", "dest"]
    gid = pf.groupby(keys, sort=True).ngroup().to_numpy()
    order = np.argsort(gid, kind="stable")
    pf = pf.iloc[order].reset_index(drop=True)
    start = np.flatnonzero(np.r_[True, np.diff(gid[order]) != 0])
    stop = np.r_[start[1:], len(pf)]
    values = pf["value"].to_numpy(dtype=np.float64)
    means = np.array([math.fsum(values[a:b]) / (b - a) for a, b in zip(start, stop)])
    cells = pf.iloc[start][keys].reset_index(drop=True)
    cells["mean_s"] = means
    cells["count"] = (stop - start).astype(np.int64)
    return HaTable(day_selector, cells)


def _nearest_bucket(buckets: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Index into sorted ``buckets`` of the nearest bucket to each ``q`` (ties -> earlier)."""
    pos = np.searchsorted(buckets, q, side="left")
    lo = np.clip(pos - 1, 0, len(buckets) - 1)
    hi = np.clip(pos, 0, len(buckets) - 1)
    return np.where(np.abs(buckets[hi] - q) < np.abs(q - buckets[lo]), hi, lo)


def ha_predict_many(table: HaTable, line: str, direction: str, origin, dest, depart_time,
                    schedule: Schedule | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`ha_predict` for one line and direction.

    Returns ``(seconds, fallback)``. Queries with no data at all for their
    (origin, dest) pair fall back to the scheduled travel time when a
    schedule is given; otherwise, or when the schedule has no run either,
    :class:`NoDataAnywhere` is raised.
    """
    origin = np.atleast_1d(np.asarray(origin, dtype=np.int64))
    dest = np.atleast_1d(np.asarray(dest, dtype=np.int64))
    depart_time = np.atleast_1d(np.asarray(depart_time, dtype=np.float64))
    if np.any(origin >= dest):
        raise ValueError("origin must precede dest")
    dc = day_class_of(depart_time, table.selector)
    qb = bucket_of(depart_time)
    out = np.full(len(origin), np.nan)
    frame = pd.DataFrame({"dc": dc, "o": origin, "d": dest})
    for (c, o, d), g in frame.groupby(["dc", "o", "d"], sort=False):
        e = table._index.get((line, direction, c, int(o), int(d)))
        if e is None:
            continue
        rows = g.index.to_numpy()
        out[rows] = e[1][_nearest_bucket(e[0], qb[rows])]
    fallback = np.isnan(out)
    if np.any(fallback):
        rows = np.flatnonzero(fallback)
        if schedule is None:
            raise NoDataAnywhere(f"no historical data for {line}/{direction} and no schedule to fall back on")
        for (o, d), g in pd.DataFrame({"o": origin[rows], "d": dest[rows]}).groupby(["o", "d"], sort=False):
            r = rows[g.index.to_numpy()]
            tod = depart_time[r] % 86400.0
            runs, dep, ok = schedule.nearest_runs(line, direction, int(o), tod)
            if not np.all(ok):
                raise NoDataAnywhere(f"no historical data or scheduled run for {line}/{direction} "
                                     f"stop {o} -> {d}")
            run_ids, times = schedule.run_matrix(line, direction, int(d))
            arr = times[np.searchsorted(run_ids, runs), int(d) - 1]
            if np.any(~np.isfinite(arr)):
                raise NoDataAnywhere(f"schedule of {line}/{direction} lacks stop {d} on some runs")
            out[r] = arr - dep
    return out, fallback


def ha_predict(table: HaTable, line: str, direction: str, origin_idx: int, dest_idx: int,
               depart_time: float, schedule: Schedule | None = None) -> HaEstimate:
    """Stored mean for the query's cell, or the nearest populated bucket of the same origin.

    Bucket ties resolve to the earlier bucket.
    """
    v, fb = ha_predict_many(table, line, direction, [origin_idx], [dest_idx], [depart_time], schedule)
    return HaEstimate(float(v[0]), bool(fb[0]))

