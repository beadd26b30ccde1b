"""Per line-group and distance-band choice of the best (model, feature set) pair."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import pandas as pd

from .errors import DataError, MissingModel
from .features import META_COLUMNS, FeatureSet
from .models.base import TrainedModel, predict
from .timetable import LineGroup, group_of

BANDS = (1, 2, 3)
BAND_LABELS = {1: "<=5", 2: "6-15", 3: ">=16"}
WILDCARD_LINE = "*"

_MLP_TT = ("mlp", FeatureSet.TIMETABLE)
_MLP_HA = ("mlp", FeatureSet.HISTAVG)
_RBF_TT = ("rbfn", FeatureSet.TIMETABLE)
_RBF_HA = ("rbfn", FeatureSet.HISTAVG)

DEFAULT_CELLS: dict[tuple[LineGroup, int], tuple[str, FeatureSet]] = {
    (LineGroup.LONG_PERIPHERY_NORTH_SOUTH, 1): _MLP_TT,
    (LineGroup.LONG_PERIPHERY_NORTH_SOUTH, 2): _MLP_HA,
    (LineGroup.LONG_PERIPHERY_NORTH_SOUTH, 3): _MLP_HA,
    (LineGroup.LONG_PERIPHERY_WEST_EAST, 1): _MLP_TT,
    (LineGroup.LONG_PERIPHERY_WEST_EAST, 2): _MLP_HA,
    (LineGroup.LONG_PERIPHERY_WEST_EAST, 3): _MLP_HA,
    (LineGroup.CENTRE_PERIPHERY, 1): _MLP_TT,
    (LineGroup.CENTRE_PERIPHERY, 2): _MLP_HA,
    (LineGroup.CENTRE_PERIPHERY, 3): _MLP_HA,
    (LineGroup.LONG_THROUGH_CENTRE, 1): _MLP_TT,
    (LineGroup.LONG_THROUGH_CENTRE, 2): _MLP_HA,
    (LineGroup.LONG_THROUGH_CENTRE, 3): _MLP_HA,
    (LineGroup.EXPRESS, 1): _MLP_TT,
    (LineGroup.EXPRESS, 2): _MLP_HA,
    (LineGroup.EXPRESS, 3): _MLP_HA,
    (LineGroup.CENTRE_PRAGA, 1): _RBF_TT,
    (LineGroup.CENTRE_PRAGA, 2): _MLP_HA,
    (LineGroup.CENTRE_PRAGA, 3): _MLP_HA,
    (LineGroup.SHORT_PERIPHERY, 1): _MLP_TT,
    (LineGroup.SHORT_PERIPHERY, 2): _RBF_HA,
    (LineGroup.SHORT_PERIPHERY, 3): _MLP_HA,
    (LineGroup.SHORT_CENTRE, 1): _RBF_TT,
    (LineGroup.SHORT_CENTRE, 2): _MLP_HA,
    (LineGroup.SHORT_CENTRE, 3): _MLP_HA,
}


def band_of(distance_stops) -> np.ndarray | int:
    """Dispatch band: 1 for up to 5 stops, 2 for 6-15, 3 for 16 and more."""
    d = np.asarray(distance_stops)
    if np.any(d < 1):
        raise ValueError("distance must be at least one stop")
    b = np.where(d <= 5, 1, np.where(d <= 15, 2, 3))
    return int(b) if b.ndim == 0 else b


@dataclass(frozen=True)
class DispatchTable:
    cells: Mapping[tuple[LineGroup, int], tuple[str, FeatureSet]] = field(
        default_factory=lambda: dict(DEFAULT_CELLS))
    groups: Mapping[str, LineGroup] | None = None   # extra line -> group assignments

    def __post_init__(self):
        missing = [(g, b) for g in LineGroup for b in BANDS if (g, b) not in self.cells]
        if missing:
            raise DataError(f"dispatch table lacks cells {missing}")

    def dispatch(self, line: str, distance_stops: int) -> tuple[str, FeatureSet]:
        return self.cells[(group_of(line, dict(self.groups) if self.groups else None), band_of(distance_stops))]


DEFAULT_TABLE = DispatchTable()


def dispatch(table: DispatchTable, line: str, distance_stops: int) -> tuple[str, FeatureSet]:
    """(model kind, feature set) chosen for ``line`` at ``distance_stops``; unknown lines raise."""
    return table.dispatch(line, distance_stops)


def _parse_band(text: str) -> int:
    t = text.strip()
    for b, label in BAND_LABELS.items():
        if t in (str(b), label):
            return b
    raise DataError(f"unknown band {text!r}; use 1/2/3 or {list(BAND_LABELS.values())}")


def load_dispatch(path, groups: Mapping[str, LineGroup] | None = None) -> DispatchTable:
    """Read ``group_id,band,model,feature_set`` rows; they override the built-in cells."""
    cells = dict(DEFAULT_CELLS)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["group_id", "band", "model", "feature_set"]:
            raise DataError(f"{path}: expected header group_id,band,model,feature_set")
        for row in reader:
            kind = row["model"].strip().lower()
            if kind not in ("mlp", "rbfn"):
                raise DataError(f"{path}: model must be mlp or rbfn, got {row['model']!r}")
            try:
                fs = FeatureSet(row["feature_set"].strip().lower())
                g = LineGroup(int(row["group_id"]))
            except ValueError as exc:
                raise DataError(f"{path}: {exc}") from None
            cells[(g, _parse_band(row["band"]))] = (kind, fs)
    return DispatchTable(cells, groups)


def write_dispatch(path, table: DispatchTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group_id", "band", "model", "feature_set"])
        for g in LineGroup:
            for b in BANDS:
                kind, fs = table.cells[(g, b)]
                w.writerow([int(g), b, kind, fs.value])


RegistryKey = tuple[str, str, str]


def registry_key(kind: str, feature_set, line: str) -> RegistryKey:
    return (kind, FeatureSet(feature_set).value, line)


def _lookup(registry: Mapping[RegistryKey, TrainedModel], key: RegistryKey) -> tuple[RegistryKey, TrainedModel]:
    if key in registry:
        return key, registry[key]
    pooled = (key[0], key[1], WILDCARD_LINE)
    if pooled in registry:
        return pooled, registry[pooled]
    raise MissingModel(key)


def hybrid_predict(registry: Mapping[RegistryKey, TrainedModel], table: DispatchTable,
                   query: pd.DataFrame) -> tuple[np.ndarray, np.ndarray]:
    """Route every query row to its dispatched model.

    ``query`` must hold the meta columns and the union of the features the
    selected models need. A registry entry for line ``"*"`` serves lines
    without a model of their own. Returns ``(seconds, model_ids)``.
    """
    q = query.reset_index(drop=True)
    dist = (q["dest_idx"] - q["origin_idx"]).to_numpy()
    bands = band_of(dist)
    out = np.empty(len(q))
    ids = np.empty(len(q), dtype=object)
    frame = pd.DataFrame({"line": q["line"].astype(str), "band": np.atleast_1d(bands)})
    for (line, band), rows in frame.groupby(["line", "band"], sort=True).indices.items():
        kind, fs = table.dispatch(line, {1: 1, 2: 6, 3: 16}[int(band)])
        key, model = _lookup(registry, registry_key(kind, fs, line))
        cols = list(model.columns) + [c for c in META_COLUMNS + ["label"] if c in q.columns]
        absent = [c for c in model.columns if c not in q.columns]
        if absent:
            raise DataError(f"query lacks features {absent} needed by {model.model_id}")
        out[rows] = predict(model, q.loc[rows, cols])
        ids[rows] = f"{model.model_id}@{key[2]}"
    return out, ids
