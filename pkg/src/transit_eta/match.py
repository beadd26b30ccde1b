"""Map-matching of raw pings onto stop patterns and stop-event extraction."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Sequence

import numpy as np
import pandas as pd

from . import kernels
from .errors import Ambiguous, OffRoute, TooFewPings
from .ingest import TIME_FORMAT, PingTable, RawPing
from .timetable import Timetable

log = logging.getLogger(__name__)

PROGRESS_COLUMNS = ["line", "timestamp", "vehicle_id", "brigade", "direction",
                    "next_stop_idx", "at_stop", "pct"]
TRIP_COLUMNS = ["line", "direction", "vehicle_id", "brigade", "trip", "seq", "arrival_s", "departure_s"]


@dataclass
class MatchConfig:
    """Thresholds of the matcher. None of them come from observed data; tune per feed."""

    at_stop_m: float = 50.0
    off_route_m: float = 500.0
    max_bad: int = 3            # consecutive rejected pings tolerated before a trip split
    gap_s: float = 900.0
    max_speed_mps: float = 30.0
    backtrack_m: float = 100.0
    window: int = 6             # segments searched ahead of the current one
    direction_stops: int = 3    # distinct nearest stops needed to call a direction
    direction_max_pings: int = 200
    min_direction_pings: int = 5


@dataclass(frozen=True)
class ProgressRecord:
    line: str
    timestamp: datetime
    vehicle_id: str
    brigade: str
    direction: str
    next_stop_idx: int
    at_stop: bool
    pct: float


@dataclass
class TripTrace:
    """Stop events of one vehicle run in one direction.

    Times are seconds on the local wall-clock epoch used by :class:`PingTable`.
    ``stops`` are 1-based pattern indices.
    """

    line: str
    direction: str
    vehicle_id: str
    brigade: str
    stops: np.ndarray
    arrival: np.ndarray
    departure: np.ndarray

    def __len__(self):
        return len(self.stops)

    @property
    def day(self) -> int:
        """Day number (days since epoch) of the first departure."""
        return int(self.departure[0] // 86400)

    @property
    def date(self) -> str:
        return datetime.fromtimestamp(self.day * 86400, tz=timezone.utc).strftime("%Y-%m-%d")

    def is_valid(self) -> bool:
        times = np.column_stack([self.arrival, self.departure]).ravel()
        return (len(self.stops) >= 1 and bool(np.all(np.diff(self.stops) > 0))
                and bool(np.all(self.arrival <= self.departure))
                and bool(np.all(self.arrival[1:] > self.departure[:-1]))
                and bool(np.all(np.diff(times) >= 0)))


# --- direction ------------------------------------------------------------

def _forward_transitions(nearest: np.ndarray) -> int:
    d = np.diff(nearest)
    return int(np.sum(d > 0))


def _direction_from_nearest(nearest_by_dir: dict[str, np.ndarray], min_pings: int) -> str:
    first = next(iter(nearest_by_dir.values()))
    if len(first) < min_pings or len(np.unique(first)) < 2:
        raise TooFewPings(f"need >= {min_pings} pings spanning 2 stops, got {len(first)}")
    scores = {d: _forward_transitions(nr) for d, nr in nearest_by_dir.items()}
    best = max(scores.values())
    winners = [d for d, s in scores.items() if s == best]
    if len(winners) > 1 or best == 0:
        raise Ambiguous(f"direction scores tie: {scores}")
    return winners[0]


def match_direction(pings: Sequence[RawPing], timetable: Timetable, line: str,
                    min_pings: int = 5) -> str:
    """Direction whose stop order best explains the order in which stops are approached."""
    lat = np.array([p.position.lat for p in pings])
    lon = np.array([p.position.lon for p in pings])
    nearest = {}
    for d in timetable.directions(line):
        slat, slon = timetable.coords(line, d)
        nearest[d] = kernels.nearest_stops(lat, lon, slat, slon)
    if not nearest:
        raise TooFewPings(f"line {line} has no stop patterns")
    return _direction_from_nearest(nearest, min_pings)


# --- progress -------------------------------------------------------------

def _walk(lat, lon, t, timetable, line, direction, start, cfg: MatchConfig):
    slat, slon = timetable.coords(line, direction)
    cum = timetable.cumulative_m(line, direction)
    return kernels.walk_route(lat, lon, t, slat, slon, cum, start, cfg.at_stop_m, cfg.off_route_m,
                              cfg.max_bad, cfg.gap_s, cfg.max_speed_mps, cfg.backtrack_m, cfg.window)


def to_progress(pings: Sequence[RawPing], timetable: Timetable, line: str, direction: str,
                config: MatchConfig | None = None, strict: bool = False) -> list[ProgressRecord]:
    """Resolve one vehicle's time-ordered pings onto the ``line``/``direction`` pattern.

    Off-route stretches split the trip and matching resumes afterwards; with
    ``strict`` an :class:`OffRoute` is raised instead.
    """
    cfg = config or MatchConfig()
    lat = np.array([p.position.lat for p in pings])
    lon = np.array([p.position.lon for p in pings])
    t = np.array([p.timestamp.replace(tzinfo=timezone.utc).timestamp() for p in pings])
    out: list[ProgressRecord] = []
    pos = 0
    while pos < len(pings):
        kept, nxt, ats, pct, end, reason = _walk(lat, lon, t, timetable, line, direction, pos, cfg)
        if strict and reason in (kernels.OFF_ROUTE, kernels.IMPLAUSIBLE):
            raise OffRoute(f"vehicle left the route at ping {end}")
        for i, k, a, p in zip(kept, nxt, ats, pct):
            ping = pings[int(i)]
            out.append(ProgressRecord(ping.line, ping.timestamp, ping.vehicle_id, ping.brigade,
                                      direction, int(k), bool(a), float(p)))
        pos = end + 1 if reason == kernels.COMPLETE or end <= pos else end
    return out


def _direction_window(nearest0: np.ndarray, t: np.ndarray, pos: int, cfg: MatchConfig) -> int:
    seen = set()
    end = pos
    m = len(t)
    while end < m and end - pos < cfg.direction_max_pings:
        if end > pos and t[end] - t[end - 1] > cfg.gap_s:
            break
        seen.add(int(nearest0[end]))
        end += 1
        if len(seen) >= cfg.direction_stops and end - pos >= cfg.min_direction_pings:
            break
    return end


def preprocess(pings: PingTable, timetable: Timetable,
               config: MatchConfig | None = None) -> pd.DataFrame:
    """Turn a ping table into progress records (the preprocessed record layout).

    Each vehicle's pings are segmented into trips: a direction is inferred
    from a short look-ahead window, the pattern is walked until the last stop
    is reached (that ping also opens the next trip), a gap, or an off-route
    stretch. Returns a frame with :data:`PROGRESS_COLUMNS` plus ``t`` (epoch
    seconds) and ``trip`` (running segment id).
    """
    cfg = config or MatchConfig()
    f = pings.frame
    parts = []
    trip_id = 0
    known = set(timetable.lines())
    for (line, vid), g in f.groupby(["line", "vehicle_id"], sort=True):
        if line not in known:
            log.debug("line %s has no timetable; %d pings ignored", line, len(g))
            continue
        g = g.sort_values("t", kind="stable")
        lat = g["lat"].to_numpy()
        lon = g["lon"].to_numpy()
        t = g["t"].to_numpy(dtype=np.float64)
        dirs = timetable.directions(line)
        nearest = {}
        for d in dirs:
            slat, slon = timetable.coords(line, d)
            nearest[d] = kernels.nearest_stops(lat, lon, slat, slon)
        nearest0 = nearest[dirs[0]]
        brig = g["brigade"].to_numpy()
        ts = g["timestamp"].to_numpy()
        pos = 0
        m = len(g)
        while pos < m:
            w = _direction_window(nearest0, t, pos, cfg)
            try:
                direction = _direction_from_nearest({d: nr[pos:w] for d, nr in nearest.items()},
                                                    cfg.min_direction_pings)
            except (TooFewPings, Ambiguous):
                pos += 1
                continue
            kept, nxt, ats, pct, end, reason = _walk(lat, lon, t, timetable, line, direction, pos, cfg)
            if reason == kernels.COMPLETE and len(kept) <= 1:
                pos = max(end, pos) + 1
                continue
            if len(kept):
                parts.append(pd.DataFrame({
                    "line": line, "timestamp": ts[kept], "vehicle_id": vid, "brigade": brig[kept],
                    "direction": direction, "next_stop_idx": nxt, "at_stop": ats.astype(bool),
                    "pct": pct, "t": t[kept].astype(np.int64), "trip": trip_id,
                }))
                trip_id += 1
            pos = end if end > pos else pos + 1
    if not parts:
        return pd.DataFrame({c: [] for c in PROGRESS_COLUMNS + ["t", "trip"]})
    return pd.concat(parts, ignore_index=True)


# --- stop events ----------------------------------------------------------

def _events(next_idx, at_stop, pct, t, n_stops):
    u = (next_idx - 2) + pct / 100.0
    stop_of = np.where(pct > 50.0, next_idx, next_idx - 1)
    stops, arr, dep = [], [], []
    cm = np.maximum.accumulate(u)
    for s in range(1, n_stops + 1):
        hits = np.flatnonzero(at_stop & (stop_of == s))
        if len(hits):
            stops.append(s)
            arr.append(t[hits[0]])
            dep.append(t[hits[-1]])
            continue
        b = int(np.searchsorted(cm, s - 1, side="right"))
        if b == 0 or b >= len(u):
            continue
        a = b - 1
        ua, ub = u[a], u[b]
        if ua >= s - 1:
            x = t[a]
        else:
            x = t[a] + (t[b] - t[a]) * (s - 1 - ua) / (ub - ua)
        stops.append(s)
        arr.append(x)
        dep.append(x)
    stops = np.asarray(stops, dtype=np.int64)
    arr = np.asarray(arr, dtype=np.float64)
    dep = np.asarray(dep, dtype=np.float64)
    keep = []
    last = -np.inf
    for i in range(len(stops)):
        if arr[i] > last:
            keep.append(i)
            last = dep[i]
    keep = np.asarray(keep, dtype=np.int64)
    return stops[keep], arr[keep], dep[keep]


def to_trips(progress: pd.DataFrame, timetable: Timetable, gap_s: float = 900.0,
             min_events: int = 2) -> list[TripTrace]:
    """Derive stop events from progress records.

    Arrival at a stop is the first at-stop record for it, otherwise the time
    at which the record sequence crosses the stop, linearly interpolated in
    (segment index + pct) against time. Departure is the last at-stop record,
    or the arrival. Records are split into trips on a direction change, a
    backward jump of ``next_stop_idx`` or a gap longer than ``gap_s``.
    """
    trips: list[TripTrace] = []
    if len(progress) == 0:
        return trips
    df = progress
    if "t" not in df.columns:
        df = df.assign(t=pd.to_datetime(df["timestamp"], format=TIME_FORMAT)
                       .astype("datetime64[s]").astype(np.int64))
    for (line, vid), g in df.groupby(["line", "vehicle_id"], sort=True):
        g = g.sort_values("t", kind="stable")
        t = g["t"].to_numpy(dtype=np.float64)
        direction = g["direction"].to_numpy()
        nxt = g["next_stop_idx"].to_numpy(dtype=np.int64)
        at = g["at_stop"].to_numpy(dtype=bool)
        pct = g["pct"].to_numpy(dtype=np.float64)
        brig = g["brigade"].to_numpy()
        cut = np.flatnonzero((direction[1:] != direction[:-1]) | (np.diff(t) > gap_s)
                             | (np.diff(nxt) < 0)) + 1
        bounds = np.concatenate([[0], cut, [len(g)]])
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            d = direction[lo]
            n = len(timetable.pattern(line, d))
            stops, arr, dep = _events(nxt[lo:hi], at[lo:hi], pct[lo:hi], t[lo:hi], n)
            if len(stops) >= min_events:
                trips.append(TripTrace(line, d, vid, brig[lo], stops, arr, dep))
    trips.sort(key=lambda tr: (tr.line, tr.day, tr.vehicle_id, tr.departure[0]))
    return trips


def write_progress(path, progress: pd.DataFrame) -> None:
    out = progress[PROGRESS_COLUMNS].copy()
    out["at_stop"] = out["at_stop"].astype(int)
    out["pct"] = out["pct"].round(4)
    out.to_csv(path, index=False, lineterminator="\n")


def read_progress(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"line": str, "vehicle_id": str, "brigade": str, "direction": str})
    df["at_stop"] = df["at_stop"].astype(bool)
    df["t"] = pd.to_datetime(df["timestamp"], format=TIME_FORMAT).astype("datetime64[s]").astype(np.int64)
    return df


def trips_frame(trips: Sequence[TripTrace]) -> pd.DataFrame:
    rows = []
    for k, tr in enumerate(trips):
        rows.append(pd.DataFrame({
            "line": tr.line, "direction": tr.direction, "vehicle_id": tr.vehicle_id,
            "brigade": tr.brigade, "trip": k, "seq": tr.stops,
            "arrival_s": tr.arrival, "departure_s": tr.departure,
        }))
    if not rows:
        return pd.DataFrame({c: [] for c in TRIP_COLUMNS})
    return pd.concat(rows, ignore_index=True)


def write_trips(path, trips: Sequence[TripTrace]) -> None:
    df = trips_frame(trips)
    df["arrival_s"] = df["arrival_s"].round(3)
    df["departure_s"] = df["departure_s"].round(3)
    df.to_csv(path, index=False, lineterminator="\n")


def read_trips(path) -> list[TripTrace]:
    df = pd.read_csv(path, dtype={"line": str, "vehicle_id": str, "brigade": str, "direction": str})
    trips = []
    for _, g in df.groupby("trip", sort=True):
        r = g.iloc[0]
        trips.append(TripTrace(r["line"], r["direction"], r["vehicle_id"], r["brigade"],
                               g["seq"].to_numpy(dtype=np.int64), g["arrival_s"].to_numpy(dtype=float),
                               g["departure_s"].to_numpy(dtype=float)))
    return trips
