"""Deterministic synthetic city with known stop-event times.

Lines are straight-segment polylines; vehicles run the schedule with hop
times ``base * rush multiplier * segment delay * trip factor * lognormal
noise`` and report their position on a common polling grid. ``truth.csv``
records every simulated stop arrival and departure, so each pipeline stage
can be checked against it.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np
import pandas as pd

from .geo import GeoPoint, offset
from .ingest import PING_COLUMNS
from .match import TripTrace
from .timetable import RoutePattern, Schedule, StopDef, Timetable, write_timetable

# Lines in line-group order; synthetic cities take the first ``n_lines``.
LINE_ORDER = (
    "523", "136", "131", "116", "158", "111", "172", "128",
    "112", "154", "503", "180", "521", "117", "191", "107",
    "186", "167", "504", "190", "182", "102", "105", "106",
    "187", "517", "509", "189", "518",
)
TRUTH_COLUMNS = ["line", "direction", "run", "seq", "arrival_s", "departure_s"]
CENTRE = GeoPoint(52.2297, 21.0122)


def working_days(start: str, count: int) -> list[str]:
    """``count`` consecutive Monday-Friday dates from ``start`` inclusive."""
    d = date.fromisoformat(start)
    out = []
    while len(out) < count:
        if d.weekday() < 5:
            out.append(d.isoformat())
        d += timedelta(days=1)
    return out


def _epoch_day(iso: str) -> int:
    return (date.fromisoformat(iso) - date(1970, 1, 1)).days


@dataclass
class SynthSpec:
    seed: int = 7
    n_lines: int = 3
    stops_per_line: tuple[int, ...] | int = (28, 18, 22)
    base_hop_s: float = 90.0
    stop_spacing_m: tuple[float, float] = (300.0, 600.0)
    rush: tuple[tuple[float, float, float], ...] = ((7.0, 10.0, 1.3), (15.0, 19.0, 1.3))
    noise_sigma: float = 0.0
    trip_sigma: float = 0.0
    segment_delay_sigma: float = 0.0
    dwell_s: float = 20.0
    layover_s: float = 120.0
    max_layover_s: float = 720.0
    late_start_s: float = 300.0
    ping_interval_s: int = 30
    headway_s: float = 900.0
    service_start_s: float = 6 * 3600.0
    service_end_s: float = 22 * 3600.0
    days: tuple[str, ...] = ("2021-03-11", "2021-03-18", "2021-03-25", "2021-04-01")
    glitch_rate: float = 0.0
    glitch_m: tuple[float, float] = (200.0, 1000.0)
    lines: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.base_hop_s <= 0 or self.dwell_s < 0 or self.ping_interval_s <= 0 or self.headway_s <= 0:
            raise ValueError("synthetic city timings must be positive")
        if any(f < 1 for _, _, f in self.rush):
            raise ValueError("rush multipliers must be >= 1")
        if not 0 <= self.glitch_rate < 1:
            raise ValueError("glitch_rate must be in [0, 1)")
        if min(self.noise_sigma, self.trip_sigma, self.segment_delay_sigma) < 0:
            raise ValueError("noise scales must be non-negative")
        self.stop_counts()

    def line_labels(self) -> list[str]:
        if self.lines is not None:
            return list(self.lines)
        return list(LINE_ORDER[: self.n_lines])

    def stop_counts(self) -> list[int]:
        n = len(self.line_labels())
        if isinstance(self.stops_per_line, int):
            counts = [self.stops_per_line] * n
        else:
            counts = [self.stops_per_line[i % len(self.stops_per_line)] for i in range(n)]
        if any(not 2 <= c <= 40 for c in counts):
            raise ValueError("stops per line must be within 2..40")
        return counts

    def rush_at(self, tod: float) -> float:
        """Scalar :meth:`rush_factor`."""
        h = (tod % 86400.0) / 3600.0
        f = 1.0
        for lo, hi, mult in self.rush:
            if lo <= h < hi:
                f = mult
        return f

    def rush_factor(self, tod: np.ndarray | float) -> np.ndarray:
        h = (np.asarray(tod, dtype=float) % 86400.0) / 3600.0
        f = np.ones_like(h)
        for lo, hi, mult in self.rush:
            f = np.where((h >= lo) & (h < hi), mult, f)
        return f


@dataclass
class SynthCity:
    spec: SynthSpec
    timetable: Timetable
    pings: pd.DataFrame
    truth: pd.DataFrame
    aux: pd.DataFrame
    segment_delay: dict = field(default_factory=dict)
    vehicle_of_run: dict = field(default_factory=dict, repr=False)

    def write(self, directory) -> None:
        d = os.fspath(directory)
        os.makedirs(d, exist_ok=True)
        write_timetable(d, self.timetable)
        self.pings[PING_COLUMNS].to_csv(os.path.join(d, "pings.csv"), index=False,
                                        lineterminator="\n", float_format=None)
        self.truth[TRUTH_COLUMNS].to_csv(os.path.join(d, "truth.csv"), index=False, lineterminator="\n")
        self.aux.to_csv(os.path.join(d, "segments_aux.csv"), index=False, lineterminator="\n")

    def truth_trips(self) -> list[TripTrace]:
        return truth_to_trips(self.truth, self.vehicle_of_run)


def truth_to_trips(truth: pd.DataFrame, vehicle_of_run: dict | None = None) -> list[TripTrace]:
    """One :class:`TripTrace` per simulated run (vehicle ids from the simulation when given)."""
    t = truth.sort_values(["line", "direction", "run", "arrival_s", "seq"], kind="stable")
    # run ids repeat every day: a new instance starts at each seq 1
    seq = t["seq"].to_numpy(dtype=np.int64)
    starts = np.flatnonzero(seq == 1)
    bounds = np.r_[starts, len(t)]
    line = t["line"].to_numpy()
    direction = t["direction"].to_numpy()
    run = t["run"].to_numpy(dtype=np.int64)
    arr = t["arrival_s"].to_numpy(dtype=float)
    dep = t["departure_s"].to_numpy(dtype=float)
    lookup = vehicle_of_run or {}
    trips = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        day = int(dep[a] // 86400)
        vid, brig = lookup.get((line[a], direction[a], day, int(run[a])), (f"run{run[a]}", "0"))
        trips.append(TripTrace(str(line[a]), str(direction[a]), vid, brig, seq[a:b].copy(),
                               arr[a:b].copy(), dep[a:b].copy()))
    trips.sort(key=lambda tr: (tr.line, tr.day, tr.vehicle_id, tr.departure[0]))
    return trips


def _build_geometry(rng, spec: SynthSpec):
    stops: dict[str, StopDef] = {}
    patterns = {}
    for line, n in zip(spec.line_labels(), spec.stop_counts()):
        east = rng.uniform(-6000, 6000)
        north = rng.uniform(-6000, 6000)
        p = offset(CENTRE, east, north)
        heading = rng.uniform(0, 2 * math.pi)
        ids = []
        for k in range(n):
            sid = f"{line}_{k + 1:02d}"
            stops[sid] = StopDef(sid, p)
            ids.append(sid)
            step = rng.uniform(*spec.stop_spacing_m)
            heading += rng.uniform(-0.35, 0.35)
            p = offset(p, step * math.sin(heading), step * math.cos(heading))
        patterns[(line, "A")] = RoutePattern(line, "A", tuple(ids))
        patterns[(line, "B")] = RoutePattern(line, "B", tuple(reversed(ids)))
    return stops, patterns


def _hop_base(tt: Timetable, spec: SynthSpec, line, direction):
    cum = tt.cumulative_m(line, direction)
    seg = np.diff(cum)
    mean_spacing = 0.5 * (spec.stop_spacing_m[0] + spec.stop_spacing_m[1])
    return spec.base_hop_s * seg / mean_spacing


def _scheduled_run(hop_base, spec: SynthSpec, t0):
    """Scheduled departures (last entry: arrival at the terminal), integer seconds."""
    n = len(hop_base) + 1
    dep = np.empty(n)
    t = float(t0)
    dep[0] = t
    for k in range(n - 1):
        arr = t + round(hop_base[k] * spec.rush_at(t))
        t = arr + (spec.dwell_s if k + 1 < n - 1 else 0.0)
        dep[k + 1] = arr if k + 1 == n - 1 else t
    return dep


def generate(spec: SynthSpec, emit_pings: bool = True) -> SynthCity:
    """Simulate ``spec`` deterministically from its seed."""
    rng = np.random.default_rng(spec.seed)
    stops, patterns = _build_geometry(rng, spec)
    tt = Timetable(stops, patterns, Schedule())
    lines = spec.line_labels()

    aux_rows = []
    seg_delay = {}
    hop_base = {}
    for line in lines:
        for direction in ("A", "B"):
            hb = _hop_base(tt, spec, line, direction)
            hop_base[(line, direction)] = hb
            if spec.segment_delay_sigma > 0:
                seg_delay[(line, direction)] = np.exp(np.abs(rng.normal(0, spec.segment_delay_sigma, len(hb))))
            else:
                seg_delay[(line, direction)] = np.ones(len(hb))
            for k in range(len(hb)):
                aux_rows.append((line, direction, k + 1, int(rng.random() < 0.3), int(rng.integers(0, 4))))

    # schedule: runs leave the first stop every headway, B offset by half a headway
    sched_rows = []
    sched_runs = {}
    for line in lines:
        for direction, shift in (("A", 0.0), ("B", spec.headway_s / 2)):
            t0s = np.arange(spec.service_start_s + shift, spec.service_end_s, spec.headway_s)
            runs = [_scheduled_run(hop_base[(line, direction)], spec, t0) for t0 in t0s]
            sched_runs[(line, direction)] = runs
            for r, dep in enumerate(runs):
                for k, t in enumerate(dep):
                    sched_rows.append((line, direction, k + 1, r, float(t)))
    sched = Schedule.from_frame(pd.DataFrame(sched_rows, columns=["line", "direction", "seq", "run", "depart_seconds"]))
    tt = Timetable(stops, patterns, sched)

    truth_rows = []
    ping_parts = []
    vehicle_of_run = {}
    for iso in spec.days:
        day0 = _epoch_day(iso) * 86400
        for line in lines:
            runs = sorted(
                ((dep[0], direction, r) for direction in ("A", "B")
                 for r, dep in enumerate(sched_runs[(line, direction)])),
                key=lambda x: (x[0], x[1]),
            )
            # idle vehicles per terminal: list of (ready_time, vehicle index)
            idle = {"A": [], "B": []}
            tracks: list[list[tuple[float, float, float]]] = []
            for t_sched, direction, r in runs:
                n = len(patterns[(line, direction)])
                hb = hop_base[(line, direction)]
                pool = idle[direction]
                # vehicles idle longer than max_layover have left service
                pool[:] = [(ready, c) for ready, c in pool if t_sched - ready <= spec.max_layover_s]
                v = None
                for j, (ready, cand) in enumerate(pool):
                    if ready + spec.layover_s <= t_sched + spec.late_start_s:
                        v, ready_t = cand, ready
                        pool.pop(j)
                        break
                lat, lon = tt.coords(line, direction)
                if v is None:
                    v = len(tracks)
                    tracks.append([])
                    dep0 = t_sched
                    arr0 = dep0 - max(spec.dwell_s, 2.0 * spec.ping_interval_s)
                else:
                    dep0 = max(t_sched, ready_t + spec.layover_s)
                    arr0 = ready_t
                trip_f = math.exp(rng.normal(0, spec.trip_sigma)) if spec.trip_sigma > 0 else 1.0
                noise = np.exp(rng.normal(0, spec.noise_sigma, n - 1)) if spec.noise_sigma > 0 else np.ones(n - 1)
                hbl = hb.tolist()
                sdl = seg_delay[(line, direction)].tolist()
                noise = noise.tolist()
                arr = [0.0] * n
                dep = [0.0] * n
                arr[0], dep[0] = arr0, dep0
                for k in range(n - 1):
                    hop = hbl[k] * spec.rush_at(dep[k]) * sdl[k] * trip_f * noise[k]
                    arr[k + 1] = dep[k] + max(1.0, round(hop))
                    dep[k + 1] = arr[k + 1] + (spec.dwell_s if k + 1 < n - 1 else 0.0)
                for k in range(n):
                    truth_rows.append((line, direction, r, k + 1, day0 + arr[k], day0 + dep[k]))
                track = tracks[v]
                for k in range(n):
                    track.append((day0 + arr[k], lat[k], lon[k]))
                    if dep[k] != arr[k]:
                        track.append((day0 + dep[k], lat[k], lon[k]))
                other = "B" if direction == "A" else "A"
                idle[other].append((arr[-1], v))
                idle[other].sort()
                vehicle_of_run[(line, direction, _epoch_day(iso), r)] = (f"{line}{v + 1:03d}", str(v + 1))
            if emit_pings:
                for v, track in enumerate(tracks):
                    ping_parts.append(_pings_for_track(rng, spec, line, v, track))

    truth = pd.DataFrame(truth_rows, columns=TRUTH_COLUMNS)
    truth["arrival_s"] = truth["arrival_s"].astype(np.int64)
    truth["departure_s"] = truth["departure_s"].astype(np.int64)
    if ping_parts:
        pings = pd.concat(ping_parts, ignore_index=True).sort_values(["t", "line", "vehicle_id"], kind="stable")
        pings = pings.reset_index(drop=True)
    else:
        pings = pd.DataFrame({c: [] for c in PING_COLUMNS + ["t"]})
    aux = pd.DataFrame(aux_rows, columns=["line", "direction", "seq", "bus_lane", "lights"])
    return SynthCity(spec, tt, pings, truth, aux, seg_delay, vehicle_of_run)


def _pings_for_track(rng, spec: SynthSpec, line, v, track):
    times = np.array([p[0] for p in track])
    lat = np.array([p[1] for p in track])
    lon = np.array([p[2] for p in track])
    step = spec.ping_interval_s
    first = math.ceil(times[0] / step) * step
    # stay at the final terminal long enough to be seen there twice
    last = times[-1] + 2 * step
    grid = np.arange(first, last + 1, step, dtype=np.int64)
    plat = np.interp(grid, times, lat)
    plon = np.interp(grid, times, lon)
    if spec.glitch_rate > 0:
        g = rng.random(len(grid)) < spec.glitch_rate
        idx = np.flatnonzero(g)
        dist = rng.uniform(*spec.glitch_m, len(idx))
        ang = rng.uniform(0, 2 * math.pi, len(idx))
        for i, dm, a in zip(idx, dist, ang):
            q = offset(GeoPoint(plat[i], plon[i]), dm * math.sin(a), dm * math.cos(a))
            plat[i], plon[i] = q.lat, q.lon
    ts = pd.to_datetime(grid, unit="s").strftime("%Y-%m-%d %H:%M:%S")
    return pd.DataFrame({
        "line": line, "vehicle_id": f"{line}{v + 1:03d}", "brigade": str(v + 1),
        "timestamp": ts, "lat": plat, "lon": plon, "t": grid,
    })


def segment_occupancy(truth: pd.DataFrame, line: str, direction: str, seq: int, t: float) -> int:
    """Runs strictly between leaving stop ``seq`` and reaching ``seq + 1`` at time ``t``."""
    a = truth[(truth["line"] == line) & (truth["direction"] == direction) & (truth["seq"] == seq)]
    b = truth[(truth["line"] == line) & (truth["direction"] == direction) & (truth["seq"] == seq + 1)]
    m = a.merge(b, on=["line", "direction", "run"], suffixes=("_a", "_b"))
    m = m[(m["arrival_s_b"] - m["departure_s_a"]).between(0, 6 * 3600)]
    return int(((m["departure_s_a"] < t) & (t < m["arrival_s_b"])).sum())
