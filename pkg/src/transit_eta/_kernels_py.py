"""Pure-Python implementations of the hot kernels.

Semantics are identical to the compiled ``_kernels`` extension; this module
is used when the extension is not built or when ``TRANSIT_ETA_PURE_PYTHON``
is set.
"""
import math

import numpy as np

EARTH_RADIUS_M = 6371000.0
DEG = math.pi / 180.0

# walk_route end reasons
EXHAUSTED = 0
COMPLETE = 1
GAP = 2
OFF_ROUTE = 3
IMPLAUSIBLE = 4


def haversine_many(lat1, lon1, lat2, lon2):
    lat1 = np.asarray(lat1, dtype=np.float64) * DEG
    lat2 = np.asarray(lat2, dtype=np.float64) * DEG
    dlat = lat2 - lat1
    dlon = (np.asarray(lon2, dtype=np.float64) - np.asarray(lon1, dtype=np.float64)) * DEG
    h = np.sin(dlat / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def _hav(lat1, lon1, lat2, lon2):
    la1 = lat1 * DEG
    la2 = lat2 * DEG
    s1 = math.sin((la2 - la1) / 2)
    s2 = math.sin((lon2 - lon1) * DEG / 2)
    h = s1 * s1 + math.cos(la1) * math.cos(la2) * s2 * s2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def nearest_stops(plat, plon, slat, slon):
    """Index of the nearest stop for every ping (ties -> lowest index)."""
    plat = np.asarray(plat, dtype=np.float64)
    plon = np.asarray(plon, dtype=np.float64)
    d = haversine_many(plat[:, None], plon[:, None],
                       np.asarray(slat, dtype=np.float64)[None, :],
                       np.asarray(slon, dtype=np.float64)[None, :])
    return np.argmin(d, axis=1).astype(np.int64)


def _project(plat, plon, alat, alon, blat, blon):
    k = DEG * EARTH_RADIUS_M
    c = math.cos(alat * DEG)
    ex = (blon - alon) * k * c
    ey = (blat - alat) * k
    px = (plon - alon) * k * c
    py = (plat - alat) * k
    l2 = ex * ex + ey * ey
    t = (px * ex + py * ey) / l2
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    dx = px - t * ex
    dy = py - t * ey
    return t, math.sqrt(dx * dx + dy * dy)


def _locate(lat, lon, slat, slon, cum, jlo, jhi, at_stop_m):
    """Best segment, fraction, distance, at-stop index (or -1) and route position."""
    best_d = math.inf
    best_j = jlo
    best_t = 0.0
    for j in range(jlo, jhi + 1):
        tt, dd = _project(lat, lon, slat[j], slon[j], slat[j + 1], slon[j + 1])
        if dd < best_d:
            best_d = dd
            best_j = j
            best_t = tt
    stop = -1
    stop_d = math.inf
    for s in range(jlo, jhi + 2):
        dd = _hav(lat, lon, slat[s], slon[s])
        if dd <= at_stop_m and dd < stop_d:
            stop_d = dd
            stop = s
    if stop >= 0:
        pos = cum[stop]
    else:
        pos = cum[best_j] + best_t * (cum[best_j + 1] - cum[best_j])
    return best_j, best_t, best_d, stop, pos


def walk_route(plat, plon, ptime, slat, slon, cum, start,
               at_stop_m, off_route_m, max_bad, gap_s, max_speed, backtrack_m, window):
    """Advance along one stop pattern from ping ``start``.

    Returns ``(kept, next_stop, at_stop, pct, end, reason)`` where ``kept``
    holds the accepted ping indices, ``next_stop`` is 1-based, and ``end`` is
    the ping index at which a following trip attempt should begin.

    A ping is rejected when it is farther than ``off_route_m`` from the
    route, implies forward speed above ``max_speed`` or a backward jump over
    ``backtrack_m``, or is a forward spike that the following ping retracts.
    More than ``max_bad`` consecutive rejections end the trip.
    """
    plat, plon, ptime = list(map(float, plat)), list(map(float, plon)), list(map(float, ptime))
    slat, slon, cum = list(map(float, slat)), list(map(float, slon)), list(map(float, cum))
    m = len(plat)
    n = len(slat)
    kept = []
    nxt = []
    ats = []
    pcts = []
    k = 0
    have_last = False
    last_t = 0.0
    last_pos = 0.0
    bad = 0
    first_bad = -1
    end = m
    reason = EXHAUSTED
    i = start
    while i < m:
        t_i = ptime[i]
        if have_last and t_i - last_t > gap_s:
            end = i
            reason = GAP
            break
        if k == 0:
            jlo = 0
            jhi = n - 2
        else:
            jlo = k - 2 if k >= 2 else 0
            jhi = min(jlo + window, n - 2)
        best_j, best_t, best_d, stop, pos = _locate(plat[i], plon[i], slat, slon, cum, jlo, jhi, at_stop_m)
        rejected = False
        off = best_d > off_route_m and stop < 0
        if off:
            rejected = True
        elif have_last:
            dp = pos - last_pos
            if dp > max_speed * (t_i - last_t) + at_stop_m or dp < -backtrack_m:
                rejected = True
        if rejected:
            bad += 1
            if bad == 1:
                first_bad = i
            if bad > max_bad:
                end = first_bad
                reason = OFF_ROUTE if off else IMPLAUSIBLE
                break
            i += 1
            continue
        if stop < 0 and i + 1 < m and ptime[i + 1] - t_i <= gap_s:
            _, _, d2, s2, pos2 = _locate(plat[i + 1], plon[i + 1], slat, slon, cum, jlo, jhi, at_stop_m)
            if (d2 <= off_route_m or s2 >= 0) and pos2 < pos - backtrack_m and (
                    not have_last or pos2 >= last_pos - backtrack_m):
                i += 1
                continue
        bad = 0
        kept.append(i)
        if stop >= 0:
            if stop == n - 1:
                nxt.append(n)
                ats.append(1)
                pcts.append(100.0)
                end = i
                reason = COMPLETE
                break
            k = stop + 2
            nxt.append(k)
            ats.append(1)
            pcts.append(0.0)
        else:
            k = best_j + 2
            nxt.append(k)
            ats.append(0)
            pcts.append(100.0 * best_t)
        have_last = True
        last_t = t_i
        last_pos = pos
        i += 1
    return (np.asarray(kept, dtype=np.int64), np.asarray(nxt, dtype=np.int64),
            np.asarray(ats, dtype=np.uint8), np.asarray(pcts, dtype=np.float64), end, reason)


def kmeans_assign(X, C, chunk=4096):
    """Nearest center (squared Euclidean) for every row of ``X``; ties -> lowest index."""
    X = np.asarray(X, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    n = X.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    for lo in range(0, n, chunk):
        diff = X[lo:lo + chunk, None, :] - C[None, :, :]
        d2 = np.einsum("ikf,ikf->ik", diff, diff)
        lab = np.argmin(d2, axis=1)
        labels[lo:lo + chunk] = lab
        dist[lo:lo + chunk] = d2[np.arange(len(lab)), lab]
    return labels, dist
