# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Mirrors ``_kernels_py`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, asin, sqrt, INFINITY

cnp.import_array()

cdef double EARTH_RADIUS_M = 6371000.0
cdef double DEG = 3.141592653589793 / 180.0

EXHAUSTED = 0
COMPLETE = 1
GAP = 2
OFF_ROUTE = 3
IMPLAUSIBLE = 4


cdef inline double _hav(double lat1, double lon1, double lat2, double lon2) noexcept nogil:
    cdef double la1 = lat1 * DEG
    cdef double la2 = lat2 * DEG
    cdef double s1 = sin((la2 - la1) / 2)
    cdef double s2 = sin((lon2 - lon1) * DEG / 2)
    cdef double h = s1 * s1 + cos(la1) * cos(la2) * s2 * s2
    h = sqrt(h)
    if h > 1.0:
        h = 1.0
    return 2 * EARTH_RADIUS_M * asin(h)


cdef inline void _project(double plat, double plon, double alat, double alon,
                          double blat, double blon, double* t_out, double* d_out) noexcept nogil:
    cdef double k = DEG * EARTH_RADIUS_M
    cdef double c = cos(alat * DEG)
    cdef double ex = (blon - alon) * k * c
    cdef double ey = (blat - alat) * k
    cdef double px = (plon - alon) * k * c
    cdef double py = (plat - alat) * k
    cdef double l2 = ex * ex + ey * ey
    cdef double t = (px * ex + py * ey) / l2
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    cdef double dx = px - t * ex
    cdef double dy = py - t * ey
    t_out[0] = t
    d_out[0] = sqrt(dx * dx + dy * dy)


def haversine_many(lat1, lon1, lat2, lon2):
    b = np.broadcast_arrays(np.asarray(lat1, dtype=np.float64), np.asarray(lon1, dtype=np.float64),
                            np.asarray(lat2, dtype=np.float64), np.asarray(lon2, dtype=np.float64))
    shape = b[0].shape
    cdef double[::1] a1 = np.ascontiguousarray(b[0]).ravel()
    cdef double[::1] o1 = np.ascontiguousarray(b[1]).ravel()
    cdef double[::1] a2 = np.ascontiguousarray(b[2]).ravel()
    cdef double[::1] o2 = np.ascontiguousarray(b[3]).ravel()
    out = np.empty(a1.shape[0], dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(a1.shape[0]):
            ov[i] = _hav(a1[i], o1[i], a2[i], o2[i])
    return out.reshape(shape)


def nearest_stops(plat, plon, slat, slon):
    cdef double[::1] pa = np.ascontiguousarray(plat, dtype=np.float64)
    cdef double[::1] po = np.ascontiguousarray(plon, dtype=np.float64)
    cdef double[::1] sa = np.ascontiguousarray(slat, dtype=np.float64)
    cdef double[::1] so = np.ascontiguousarray(slon, dtype=np.float64)
    out = np.empty(pa.shape[0], dtype=np.int64)
    cdef cnp.int64_t[::1] ov = out
    cdef Py_ssize_t i, s, arg
    cdef double best, d
    with nogil:
        for i in range(pa.shape[0]):
            best = INFINITY
            arg = 0
            for s in range(sa.shape[0]):
                d = _hav(pa[i], po[i], sa[s], so[s])
                if d < best:
                    best = d
                    arg = s
            ov[i] = arg
    return out


cdef inline void _locate(double lat, double lon, double[::1] sa, double[::1] so, double[::1] cm,
                         Py_ssize_t jlo, Py_ssize_t jhi, double at_stop_m,
                         Py_ssize_t* j_out, double* t_out, double* d_out, Py_ssize_t* stop_out,
                         double* pos_out) noexcept nogil:
    cdef double best_d = INFINITY, best_t = 0.0, tt, dd, stop_d = INFINITY
    cdef Py_ssize_t best_j = jlo, j, s, stop = -1
    for j in range(jlo, jhi + 1):
        _project(lat, lon, sa[j], so[j], sa[j + 1], so[j + 1], &tt, &dd)
        if dd < best_d:
            best_d = dd
            best_j = j
            best_t = tt
    for s in range(jlo, jhi + 2):
        dd = _hav(lat, lon, sa[s], so[s])
        if dd <= at_stop_m and dd < stop_d:
            stop_d = dd
            stop = s
    j_out[0] = best_j
    t_out[0] = best_t
    d_out[0] = best_d
    stop_out[0] = stop
    if stop >= 0:
        pos_out[0] = cm[stop]
    else:
        pos_out[0] = cm[best_j] + best_t * (cm[best_j + 1] - cm[best_j])


def walk_route(plat, plon, ptime, slat, slon, cum, Py_ssize_t start,
               double at_stop_m, double off_route_m, int max_bad, double gap_s,
               double max_speed, double backtrack_m, int window):
    cdef double[::1] pa = np.ascontiguousarray(plat, dtype=np.float64)
    cdef double[::1] po = np.ascontiguousarray(plon, dtype=np.float64)
    cdef double[::1] pt = np.ascontiguousarray(ptime, dtype=np.float64)
    cdef double[::1] sa = np.ascontiguousarray(slat, dtype=np.float64)
    cdef double[::1] so = np.ascontiguousarray(slon, dtype=np.float64)
    cdef double[::1] cm = np.ascontiguousarray(cum, dtype=np.float64)
    cdef Py_ssize_t m = pa.shape[0]
    cdef Py_ssize_t n = sa.shape[0]
    cdef Py_ssize_t cap = m - start if m > start else 0
    kept_a = np.empty(cap, dtype=np.int64)
    nxt_a = np.empty(cap, dtype=np.int64)
    ats_a = np.empty(cap, dtype=np.uint8)
    pct_a = np.empty(cap, dtype=np.float64)
    cdef cnp.int64_t[::1] kept = kept_a
    cdef cnp.int64_t[::1] nxt = nxt_a
    cdef cnp.uint8_t[::1] ats = ats_a
    cdef double[::1] pcts = pct_a
    cdef Py_ssize_t cnt = 0
    cdef Py_ssize_t k = 0
    cdef bint have_last = False, rejected, off
    cdef double last_t = 0.0, last_pos = 0.0, t_i, best_d, best_t, pos, dp
    cdef double t2, d2, pos2
    cdef int bad = 0
    cdef Py_ssize_t first_bad = -1
    cdef Py_ssize_t end = m
    cdef int reason = 0
    cdef Py_ssize_t i = start, jlo, jhi, best_j, stop, j2, s2
    with nogil:
        while i < m:
            t_i = pt[i]
            if have_last and t_i - last_t > gap_s:
                end = i
                reason = 2
                break
            if k == 0:
                jlo = 0
                jhi = n - 2
            else:
                jlo = k - 2 if k >= 2 else 0
                jhi = jlo + window
                if jhi > n - 2:
                    jhi = n - 2
            _locate(pa[i], po[i], sa, so, cm, jlo, jhi, at_stop_m, &best_j, &best_t, &best_d, &stop, &pos)
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
                    reason = 3 if off else 4
                    break
                i += 1
                continue
            if stop < 0 and i + 1 < m and pt[i + 1] - t_i <= gap_s:
                _locate(pa[i + 1], po[i + 1], sa, so, cm, jlo, jhi, at_stop_m, &j2, &t2, &d2, &s2, &pos2)
                if (d2 <= off_route_m or s2 >= 0) and pos2 < pos - backtrack_m and (
                        not have_last or pos2 >= last_pos - backtrack_m):
                    i += 1
                    continue
            bad = 0
            kept[cnt] = i
            if stop >= 0:
                if stop == n - 1:
                    nxt[cnt] = n
                    ats[cnt] = 1
                    pcts[cnt] = 100.0
                    cnt += 1
                    end = i
                    reason = 1
                    break
                k = stop + 2
                nxt[cnt] = k
                ats[cnt] = 1
                pcts[cnt] = 0.0
            else:
                k = best_j + 2
                nxt[cnt] = k
                ats[cnt] = 0
                pcts[cnt] = 100.0 * best_t
            cnt += 1
            have_last = True
            last_t = t_i
            last_pos = pos
            i += 1
    return (kept_a[:cnt].copy(), nxt_a[:cnt].copy(), ats_a[:cnt].copy(), pct_a[:cnt].copy(),
            int(end), int(reason))


def kmeans_assign(X, C):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] c = np.ascontiguousarray(C, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], kc = c.shape[0]
    labels_a = np.empty(n, dtype=np.int64)
    dist_a = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] labels = labels_a
    cdef double[::1] dist = dist_a
    cdef Py_ssize_t i, j, f, arg
    cdef double best, acc, diff
    with nogil:
        for i in range(n):
            best = INFINITY
            arg = 0
            for j in range(kc):
                acc = 0.0
                for f in range(d):
                    diff = x[i, f] - c[j, f]
                    acc = acc + diff * diff
                if acc < best:
                    best = acc
                    arg = j
            labels[i] = arg
            dist[i] = best
    return labels_a, dist_a
