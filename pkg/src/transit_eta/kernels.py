"""Hot-kernel dispatch.

The compiled extension ``transit_eta._kernels`` is used when it imports;
otherwise (or with ``TRANSIT_ETA_PURE_PYTHON=1``) the pure-Python module
``transit_eta._kernels_py`` provides the same functions.
"""
import os

from . import _kernels_py

if os.environ.get("TRANSIT_ETA_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "compiled" if _impl is not _kernels_py else "python"

EXHAUSTED = _kernels_py.EXHAUSTED
COMPLETE = _kernels_py.COMPLETE
GAP = _kernels_py.GAP
OFF_ROUTE = _kernels_py.OFF_ROUTE
IMPLAUSIBLE = _kernels_py.IMPLAUSIBLE

haversine_many = _impl.haversine_many
nearest_stops = _impl.nearest_stops
walk_route = _impl.walk_route
kmeans_assign = _impl.kmeans_assign

__all__ = ["BACKEND", "haversine_many", "nearest_stops", "walk_route", "kmeans_assign"]
