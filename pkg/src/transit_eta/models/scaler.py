"""Per-feature z-score scaling fitted on training data."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import TooFewSamples


@dataclass(frozen=True)
class Scaler:
    """Column means and standard deviations; columns with zero spread pass through."""

    mean: np.ndarray
    std: np.ndarray

    @property
    def scaled(self) -> np.ndarray:
        return self.std > 0

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != len(self.mean):
            raise ValueError(f"expected {len(self.mean)} features, got {X.shape[-1]}")
        s = self.scaled
        out = X.copy()
        out[..., s] = (X[..., s] - self.mean[s]) / self.std[s]
        return out

    def invert(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        s = self.scaled
        out = Z.copy()
        out[..., s] = Z[..., s] * self.std[s] + self.mean[s]
        return out

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def fit_scaler(X) -> Scaler:
    """Fit population (ddof=0) statistics column by column."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise TooFewSamples(f"need at least 2 samples to fit a scaler, got {X.shape[0]}")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    # spread at round-off level of the column magnitude counts as constant
    std = np.where(std > 1e-12 * np.maximum(1.0, np.abs(mean)), std, 0.0)
    return Scaler(mean, std)


def apply_scaler(scaler: Scaler, X) -> np.ndarray:
    return scaler.apply(X)
