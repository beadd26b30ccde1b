"""Stops, stop patterns, scheduled departures and the fixed line groups."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
import pandas as pd

from .errors import DanglingScheduleKey, DanglingStopRef, DataError, NoScheduledRun, UnknownLine
from .geo import GeoPoint, haversine

DIRECTIONS = ("A", "B")
NEAREST_RUN_WINDOW_S = 7200.0


@dataclass(frozen=True)
class StopDef:
    stop_id: str
    position: GeoPoint


@dataclass(frozen=True)
class RoutePattern:
    line: str
    direction: str
    stops: tuple[str, ...]

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise DataError(f"direction must be A or B, got {self.direction!r}")
        if len(self.stops) < 2:
            raise DataError(f"pattern {self.line}/{self.direction} has fewer than 2 stops")
        for a, b in zip(self.stops, self.stops[1:]):
            if a == b:
                raise DataError(f"pattern {self.line}/{self.direction} repeats stop {a!r}")

    def __len__(self):
        return len(self.stops)


class LineGroup(IntEnum):
    LONG_PERIPHERY_NORTH_SOUTH = 1
    LONG_PERIPHERY_WEST_EAST = 2
    CENTRE_PERIPHERY = 3
    LONG_THROUGH_CENTRE = 4
    EXPRESS = 5
    CENTRE_PRAGA = 6
    SHORT_PERIPHERY = 7
    SHORT_CENTRE = 8


GROUP_LINES: dict[LineGroup, frozenset[str]] = {
    LineGroup.LONG_PERIPHERY_NORTH_SOUTH: frozenset({"136", "154", "167", "187", "189"}),
    LineGroup.LONG_PERIPHERY_WEST_EAST: frozenset({"112", "186", "523"}),
    LineGroup.CENTRE_PERIPHERY: frozenset({"131", "503", "504", "517", "518"}),
    LineGroup.LONG_THROUGH_CENTRE: frozenset({"116", "180", "190"}),
    LineGroup.EXPRESS: frozenset({"158", "521", "182", "509"}),
    LineGroup.CENTRE_PRAGA: frozenset({"111", "117", "102"}),
    LineGroup.SHORT_PERIPHERY: frozenset({"172", "191", "105"}),
    LineGroup.SHORT_CENTRE: frozenset({"128", "107", "106"}),
}

_BUILTIN_GROUP_OF = {line: g for g, lines in GROUP_LINES.items() for line in lines}


def group_of(line: str, extra: dict[str, LineGroup] | None = None) -> LineGroup:
    """Group of ``line``; ``extra`` (e.g. from :func:`load_groups`) takes precedence."""
    line = str(line).strip()
    if extra and line in extra:
        return extra[line]
    try:
        return _BUILTIN_GROUP_OF[line]
    except KeyError:
        raise UnknownLine(line) from None


def load_groups(path: str | os.PathLike) -> dict[str, LineGroup]:
    """Read ``groups.csv`` (``line,group_id``)."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            gid = int(row["group_id"])
            if gid not in LineGroup._value2member_map_:
                raise DataError(f"{path}: unknown group_id {gid}")
            out[row["line"].strip()] = LineGroup(gid)
    return out


@dataclass
class _StopRuns:
    runs: np.ndarray   # run ids, ordered by departure
    times: np.ndarray  # departure seconds since local midnight, ascending


@dataclass
class Schedule:
    """Scheduled departures keyed by ``(line, direction, seq)`` with 1-based ``seq``.

    Run identity links departures at different stops: the ``r``-th departure
    at each stop of a pattern belongs to run ``r``.
    """

    entries: dict[tuple[str, str, int], _StopRuns] = field(default_factory=dict)

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "Schedule":
        sched = cls()
        df = df.sort_values(["line", "direction", "seq", "run"], kind="stable")
        for (line, direction, seq), g in df.groupby(["line", "direction", "seq"], sort=False):
            times = g["depart_seconds"].to_numpy(dtype=np.float64)
            if np.any(np.diff(times) < 0):
                raise DataError(f"schedule {line}/{direction}/{seq}: departures not ascending by run")
            if np.any(times < 0) or np.any(times >= 172800):
                raise DataError(f"schedule {line}/{direction}/{seq}: departure outside [0, 172800)")
            sched.entries[(str(line), str(direction), int(seq))] = _StopRuns(
                g["run"].to_numpy(dtype=np.int64), times)
        return sched

    def departures(self, line, direction, seq) -> np.ndarray:
        return self.entries[(line, direction, int(seq))].times

    def nearest_run(self, line, direction, seq, t):
        """Run id and departure of the run leaving ``seq`` nearest to ``t``.

        Ties go to the earlier run. Raises :class:`NoScheduledRun` when no run
        departs within two hours of ``t``.
        """
        runs, times = self._nearest(line, direction, seq, np.atleast_1d(np.asarray(t, dtype=float)))
        if np.isscalar(t) or np.ndim(t) == 0:
            return int(runs[0]), float(times[0])
        return runs, times

    def nearest_runs(self, line, direction, seq, t):
        """Vectorized :meth:`nearest_run` that flags instead of raising.

        Returns ``(runs, times, ok)``; ``ok`` is False where no run departs
        within two hours (runs and times there are meaningless).
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        e = self.entries.get((line, direction, int(seq)))
        if e is None or len(e.times) == 0:
            return (np.zeros(len(t), dtype=np.int64), np.full(len(t), np.nan),
                    np.zeros(len(t), dtype=bool))
        pos = np.searchsorted(e.times, t, side="left")
        lo = np.clip(pos - 1, 0, len(e.times) - 1)
        hi = np.clip(pos, 0, len(e.times) - 1)
        pick = np.where(np.abs(t - e.times[hi]) < np.abs(t - e.times[lo]), hi, lo)
        best = e.times[pick]
        return e.runs[pick], best, np.abs(best - t) <= NEAREST_RUN_WINDOW_S

    def _nearest(self, line, direction, seq, t):
        if (line, direction, int(seq)) not in self.entries:
            raise NoScheduledRun(f"no departures for {line}/{direction} stop {seq}")
        runs, best, ok = self.nearest_runs(line, direction, seq, t)
        if not np.all(ok):
            raise NoScheduledRun(f"no run of {line}/{direction} leaves stop {seq} within 2 h")
        return runs, best

    def run_matrix(self, line, direction, n_stops: int) -> tuple[np.ndarray, np.ndarray]:
        """``(run_ids, times)`` with ``times[r, seq - 1]`` the departure of run ``run_ids[r]``.

        Stops a run does not serve hold NaN.
        """
        keys = [(line, direction, s) for s in range(1, n_stops + 1)]
        all_runs = np.unique(np.concatenate(
            [self.entries[k].runs for k in keys if k in self.entries] or [np.zeros(0, dtype=np.int64)]))
        times = np.full((len(all_runs), n_stops), np.nan)
        for s, k in enumerate(keys):
            e = self.entries.get(k)
            if e is not None:
                times[np.searchsorted(all_runs, e.runs), s] = e.times
        return all_runs, times

    def run_departure(self, line, direction, seq, runs):
        """Departure time of each run id in ``runs`` at stop ``seq``."""
        try:
            e = self.entries[(line, direction, int(seq))]
        except KeyError:
            raise NoScheduledRun(f"no departures for {line}/{direction} stop {seq}") from None
        runs = np.atleast_1d(runs)
        idx = np.searchsorted(e.runs, runs) if np.all(np.diff(e.runs) >= 0) else None
        if idx is None:
            order = np.argsort(e.runs, kind="stable")
            j = np.searchsorted(e.runs[order], runs)
            j = np.clip(j, 0, len(order) - 1)
            idx = order[j]
        idx = np.clip(idx, 0, len(e.runs) - 1)
        if np.any(e.runs[idx] != runs):
            raise NoScheduledRun(f"run missing at {line}/{direction} stop {seq}")
        return e.times[idx]


def schedule_eta(sched: Schedule, line: str, direction: str, from_idx: int, to_idx: int,
                 depart_time: float) -> float:
    """Scheduled travel time from ``from_idx`` to ``to_idx`` on the run nearest ``depart_time``."""
    if not from_idx < to_idx:
        raise ValueError("from_idx must precede to_idx")
    run, dep = sched.nearest_run(line, direction, from_idx, depart_time)
    arr = float(sched.run_departure(line, direction, to_idx, run)[0])
    eta = arr - dep
    if eta <= 0:
        raise DataError(f"non-positive scheduled travel time on {line}/{direction} run {run}")
    return eta


@dataclass
class Timetable:
    stops: dict[str, StopDef]
    patterns: dict[tuple[str, str], RoutePattern]
    schedule: Schedule
    _geom: dict = field(default_factory=dict, repr=False, compare=False)

    def pattern(self, line, direction) -> RoutePattern:
        return self.patterns[(line, direction)]

    def directions(self, line) -> list[str]:
        return [d for d in DIRECTIONS if (line, d) in self.patterns]

    def lines(self) -> list[str]:
        return sorted({line for line, _ in self.patterns})

    def _geometry(self, line, direction):
        key = (line, direction)
        if key not in self._geom:
            pts = [self.stops[s].position for s in self.patterns[key].stops]
            lat = np.array([p.lat for p in pts])
            lon = np.array([p.lon for p in pts])
            cum = np.concatenate([[0.0], np.cumsum([haversine(a, b) for a, b in zip(pts, pts[1:])])])
            self._geom[key] = (lat, lon, cum)
        return self._geom[key]

    def coords(self, line, direction) -> tuple[np.ndarray, np.ndarray]:
        lat, lon, _ = self._geometry(line, direction)
        return lat, lon

    def cumulative_m(self, line, direction) -> np.ndarray:
        """Along-route distance of each stop from the first, through straight segments."""
        return self._geometry(line, direction)[2]


def _read_csv(path, columns, dtypes):
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(df.columns) != columns:
        raise DataError(f"{path}: expected columns {','.join(columns)}, got {','.join(df.columns)}")
    for c, t in dtypes.items():
        df[c] = df[c].astype(t)
    return df


def load_timetable(stops_path, patterns_path, schedule_path) -> Timetable:
    """Load and cross-check the three timetable CSVs."""
    sdf = _read_csv(stops_path, ["stop_id", "lat", "lon"], {"lat": float, "lon": float})
    stops = {}
    for sid, lat, lon in zip(sdf["stop_id"], sdf["lat"], sdf["lon"]):
        if sid in stops:
            raise DataError(f"{stops_path}: duplicate stop_id {sid!r}")
        stops[sid] = StopDef(sid, GeoPoint(lat, lon))

    pdf = _read_csv(patterns_path, ["line", "direction", "seq", "stop_id"], {"seq": int})
    patterns = {}
    for (line, direction), g in pdf.groupby(["line", "direction"], sort=True):
        g = g.sort_values("seq")
        seqs = g["seq"].tolist()
        if seqs != list(range(1, len(seqs) + 1)):
            raise DataError(f"{patterns_path}: {line}/{direction} seq must run 1..n")
        for sid in g["stop_id"]:
            if sid not in stops:
                raise DanglingStopRef(sid, f" in pattern {line}/{direction}")
        patterns[(line, direction)] = RoutePattern(line, direction, tuple(g["stop_id"]))

    cdf = _read_csv(schedule_path, ["line", "direction", "seq", "run", "depart_seconds"],
                    {"seq": int, "run": int, "depart_seconds": float})
    for line, direction, seq in cdf[["line", "direction", "seq"]].drop_duplicates().itertuples(index=False):
        pat = patterns.get((line, direction))
        if pat is None or not 1 <= seq <= len(pat):
            raise DanglingScheduleKey(f"schedule key {line}/{direction}/{seq} has no pattern stop")
    return Timetable(stops, patterns, Schedule.from_frame(cdf))


def load_timetable_dir(directory) -> Timetable:
    d = os.fspath(directory)
    return load_timetable(os.path.join(d, "stops.csv"), os.path.join(d, "patterns.csv"),
                          os.path.join(d, "schedule.csv"))


def write_timetable(directory, timetable: Timetable) -> None:
    d = os.fspath(directory)
    os.makedirs(d, exist_ok=True)
    with open(os.path.join(d, "stops.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stop_id", "lat", "lon"])
        for s in timetable.stops.values():
            w.writerow([s.stop_id, repr(s.position.lat), repr(s.position.lon)])
    with open(os.path.join(d, "patterns.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["line", "direction", "seq", "stop_id"])
        for (line, direction), pat in sorted(timetable.patterns.items()):
            for i, sid in enumerate(pat.stops, 1):
                w.writerow([line, direction, i, sid])
    with open(os.path.join(d, "schedule.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["line", "direction", "seq", "run", "depart_seconds"])
        for (line, direction, seq), e in sorted(timetable.schedule.entries.items()):
            for r, t in zip(e.runs, e.times):
                w.writerow([line, direction, seq, int(r), _fmt_seconds(t)])


def _fmt_seconds(t: float) -> str:
    return str(int(t)) if float(t).is_integer() else repr(float(t))
