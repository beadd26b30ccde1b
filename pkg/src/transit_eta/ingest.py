"""Raw GPS ping files and the polling harvester that produces them."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from dataclasses import dataclass
from datetime import datetime
from typing import Callable, Iterable

import numpy as np
import pandas as pd
import requests

from .errors import EndpointUnreachable, HeaderMismatch, MalformedResponse
from .geo import GeoPoint

log = logging.getLogger(__name__)

PING_COLUMNS = ["line", "vehicle_id", "brigade", "timestamp", "lat", "lon"]
TIME_FORMAT = "%Y-%m-%d %H:%M:%S"


@dataclass(frozen=True)
class RawPing:
    line: str
    vehicle_id: str
    brigade: str
    timestamp: datetime
    position: GeoPoint


@dataclass
class PingTable:
    """Columnar ping data as read from disk.

    ``frame`` has the CSV columns plus ``t``: integer seconds since the Unix
    epoch, computed from the local wall-clock text without any zone math.
    """

    frame: pd.DataFrame
    skipped: int

    def __len__(self):
        return len(self.frame)


def _check_header(header, path):
    if header is None or [h.strip() for h in header] != PING_COLUMNS:
        raise HeaderMismatch(f"{path}: expected header {','.join(PING_COLUMNS)}, got {header!r}")


def read_ping_table(path: str | os.PathLike) -> PingTable:
    """Read a ping CSV into a :class:`PingTable`, skipping malformed rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        _check_header(header, path)
        rows = [r for r in reader if r]
    n_total = len(rows)
    rows = [r for r in rows if len(r) == len(PING_COLUMNS)]
    frame = pd.DataFrame(rows, columns=PING_COLUMNS)
    frame["line"] = frame["line"].str.strip()
    lat = pd.to_numeric(frame["lat"], errors="coerce")
    lon = pd.to_numeric(frame["lon"], errors="coerce")
    ts = pd.to_datetime(frame["timestamp"], format=TIME_FORMAT, errors="coerce")
    ok = (
        (frame["line"] != "")
        & ts.notna()
        & np.isfinite(lat) & np.isfinite(lon)
        & lat.between(-90.0, 90.0) & lon.between(-180.0, 180.0)
    )
    frame = frame.loc[ok].copy()
    frame["lat"] = lat[ok].astype(np.float64)
    frame["lon"] = lon[ok].astype(np.float64)
    frame["t"] = (ts[ok].astype("datetime64[s]").astype(np.int64)).to_numpy()
    frame = frame.reset_index(drop=True)
    skipped = n_total - len(frame)
    if skipped:
        log.info("%s: skipped %d malformed rows", path, skipped)
    return PingTable(frame, skipped)


def read_pings(path: str | os.PathLike) -> tuple[list[RawPing], int]:
    """Return ``(pings, skipped)`` with pings in file order."""
    table = read_ping_table(path)
    f = table.frame
    pings = [
        RawPing(line, vid, brig, datetime.strptime(ts, TIME_FORMAT), GeoPoint(lat, lon))
        for line, vid, brig, ts, lat, lon in zip(
            f["line"], f["vehicle_id"], f["brigade"], f["timestamp"], f["lat"], f["lon"]
        )
    ]
    return pings, table.skipped


def _ping_row(p: RawPing):
    return [p.line, p.vehicle_id, p.brigade, p.timestamp.strftime(TIME_FORMAT),
            repr(p.position.lat), repr(p.position.lon)]


def write_pings(path: str | os.PathLike, pings: Iterable[RawPing], append: bool = False) -> int:
    """Write pings as CSV; with ``append`` the header is written only for a new file."""
    new = not append or not os.path.exists(path) or os.path.getsize(path) == 0
    n = 0
    with open(path, "a" if append else "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(PING_COLUMNS)
        for p in pings:
            w.writerow(_ping_row(p))
            n += 1
    return n


# --- harvesting -----------------------------------------------------------

def parse_simple_response(payload) -> list[RawPing]:
    """Adapter for the canonical endpoint schema.

    A JSON array of objects with keys ``line, vehicle, brigade, time, lat, lon``.
    """
    if not isinstance(payload, list):
        raise MalformedResponse("expected a JSON array of vehicle objects")
    out = []
    for obj in payload:
        try:
            ts = str(obj["time"]).replace("T", " ")[:19]
            out.append(RawPing(
                str(obj["line"]).strip(), str(obj["vehicle"]), str(obj["brigade"]),
                datetime.strptime(ts, TIME_FORMAT),
                GeoPoint(float(obj["lat"]), float(obj["lon"])),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            log.warning("dropping malformed vehicle object %r: %s", obj, exc)
    return out


def parse_warsaw_response(payload) -> list[RawPing]:
    """Adapter for the Warsaw open-data bus feed (``{"result": [{"Lines": ...}]}``)."""
    if not isinstance(payload, dict) or not isinstance(payload.get("result"), list):
        raise MalformedResponse("expected an object with a 'result' array")
    return parse_simple_response([
        {"line": o.get("Lines"), "vehicle": o.get("VehicleNumber"), "brigade": o.get("Brigade"),
         "time": o.get("Time"), "lat": o.get("Lat"), "lon": o.get("Lon")}
        for o in payload["result"] if isinstance(o, dict)
    ])


ADAPTERS = {"simple": parse_simple_response, "warsaw": parse_warsaw_response}


def harvest(
    endpoint: str,
    interval: float,
    duration: float,
    out: str | os.PathLike,
    api_key: str | None = None,
    adapter: Callable[[object], list[RawPing]] = parse_simple_response,
    timeout: float = 10.0,
    sleep: Callable[[float], None] = time.sleep,
    clock: Callable[[], float] = time.monotonic,
) -> int:
    """Poll ``endpoint`` every ``interval`` seconds for ``duration`` seconds.

    Rows are appended to ``out``. A poll that fails at the network level is
    retried once; a poll that still fails, or returns an unparseable body, is
    logged and skipped.
    """
    if interval < 1:
        raise ValueError("interval must be at least 1 second")
    n_polls = max(1, math.ceil(duration / interval))
    params = {"apikey": api_key} if api_key else None
    written = 0
    network_failures = 0
    malformed = 0
    t0 = clock()
    with requests.Session() as session:
        for k in range(n_polls):
            if k:
                wait = t0 + k * interval - clock()
                if wait > 0:
                    sleep(wait)
            resp = None
            for attempt in range(2):
                try:
                    resp = session.get(endpoint, params=params, timeout=timeout)
                    resp.raise_for_status()
                    break
                except requests.RequestException as exc:
                    resp = None
                    log.warning("poll %d attempt %d failed: %s", k + 1, attempt + 1, exc)
            if resp is None:
                network_failures += 1
                continue
            try:
                pings = adapter(json.loads(resp.text))
            except (ValueError, MalformedResponse) as exc:
                malformed += 1
                log.warning("poll %d returned a malformed response: %s", k + 1, exc)
                continue
            written += write_pings(out, pings, append=True)
    if network_failures == n_polls:
        raise EndpointUnreachable(f"{endpoint}: all {n_polls} polls failed")
    if malformed and network_failures + malformed == n_polls:
        raise MalformedResponse(f"{endpoint}: no poll returned a usable response")
    log.info("harvest: %d polls, %d rows, %d network failures, %d malformed",
             n_polls, written, network_failures, malformed)
    return written
