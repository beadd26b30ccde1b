"""Time the compiled kernels against the pure-Python fallback.

Usage: ``python3 benchmarks/bench_kernels.py [--repeat N]``. Both backends
run on identical inputs; their outputs are checked for agreement before the
timings are printed.
"""
import argparse
import time

import numpy as np

from transit_eta import _kernels_py

try:
    from transit_eta import _kernels as compiled
except ImportError:
    compiled = None


def _route(n_stops=28, spacing_m=450.0, seed=0):
    rng = np.random.default_rng(seed)
    dlat = spacing_m / 111_195.0
    slat = 52.2 + np.cumsum(np.r_[0.0, np.full(n_stops - 1, dlat)])
    slon = 21.0 + rng.normal(0, 1e-4, n_stops)
    return slat, slon


def _pings_along(slat, slon, n, seed=1):
    rng = np.random.default_rng(seed)
    u = np.linspace(0, len(slat) - 1, n)
    lat = np.interp(u, np.arange(len(slat)), slat) + rng.normal(0, 5e-5, n)
    lon = np.interp(u, np.arange(len(slon)), slon) + rng.normal(0, 5e-5, n)
    t = np.arange(n) * 30.0
    return lat, lon, t


def cases():
    slat, slon = _route()
    cum = np.r_[0.0, np.cumsum(_kernels_py.haversine_many(slat[:-1], slon[:-1], slat[1:], slon[1:]))]
    plat, plon, pt = _pings_along(slat, slon, 400)
    rng = np.random.default_rng(2)
    X = rng.normal(size=(20_000, 10))
    C = rng.normal(size=(25, 10))
    a = rng.uniform(52.1, 52.3, 100_000), rng.uniform(20.9, 21.1, 100_000)
    b = rng.uniform(52.1, 52.3, 100_000), rng.uniform(20.9, 21.1, 100_000)
    return {
        "haversine_many (100k pairs)": ("haversine_many", (a[0], a[1], b[0], b[1])),
        "nearest_stops (400 pings x 28 stops)": ("nearest_stops", (plat, plon, slat, slon)),
        "walk_route (400 pings, 28 stops)": ("walk_route", (plat, plon, pt, slat, slon, cum, 0,
                                                            50.0, 500.0, 3, 900.0, 30.0, 100.0, 6)),
        "kmeans_assign (20k x 25 centres)": ("kmeans_assign", (X, C)),
    }


def _agree(r1, r2):
    if isinstance(r1, tuple):
        return all(_agree(x, y) for x, y in zip(r1, r2))
    if isinstance(r1, (list, np.ndarray)):
        return np.allclose(np.asarray(r1, dtype=float), np.asarray(r2, dtype=float), rtol=1e-12, atol=1e-9)
    return r1 == r2


def _time(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if compiled is None:
        print("compiled extension not built; timing the pure-Python backend only")
    print(f"{'kernel':<40} {'python [ms]':>12} {'compiled [ms]':>14} {'speed-up':>9}")
    for name, (fn_name, fn_args) in cases().items():
        py_fn = getattr(_kernels_py, fn_name)
        t_py = _time(py_fn, fn_args, args.repeat)
        if compiled is None:
            print(f"{name:<40} {t_py * 1e3:12.2f} {'-':>14} {'-':>9}")
            continue
        c_fn = getattr(compiled, fn_name)
        if not _agree(py_fn(*fn_args), c_fn(*fn_args)):
            raise SystemExit(f"{name}: backends disagree")
        t_c = _time(c_fn, fn_args, args.repeat)
        print(f"{name:<40} {t_py * 1e3:12.2f} {t_c * 1e3:14.2f} {t_py / t_c:8.1f}x")


if __name__ == "__main__":
    main()
