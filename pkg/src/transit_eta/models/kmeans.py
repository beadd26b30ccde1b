"""Seeded k-means with k-means++ initialisation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import DegenerateCluster


@dataclass
class KMeansResult:
    centers: np.ndarray
    labels: np.ndarray
    inertia: float
    n_iter: int


def kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each new center drawn with probability proportional to D(x)^2."""
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if not total > 0:
            raise DegenerateCluster(f"only {c} distinct points available for {k} centers")
        j = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
        j = min(j, n - 1)
        centers[c] = X[j]
        d2 = np.minimum(d2, np.sum((X - centers[c]) ** 2, axis=1))
    return centers


def _lloyd(X, centers, max_iter):
    labels = None
    for it in range(1, max_iter + 1):
        new_labels, _ = kernels.kmeans_assign(X, centers)
        counts = np.bincount(new_labels, minlength=len(centers))
        if np.any(counts == 0):
            return None, it
        sums = np.zeros_like(centers)
        np.add.at(sums, new_labels, X)
        centers = sums / counts[:, None]
        if labels is not None and np.array_equal(labels, new_labels):
            labels = new_labels
            break
        labels = new_labels
    labels, d2 = kernels.kmeans_assign(X, centers)
    return (centers, labels, float(d2.sum())), it


def kmeans(X, k: int, seed: int = 0, max_iter: int = 50) -> KMeansResult:
    """Lloyd iterations from a k-means++ start.

    An empty cluster triggers one fresh k-means++ start from the same random
    stream; a second empty cluster raises :class:`DegenerateCluster`.
    """
    X = np.asarray(X, dtype=np.float64)
    if not 1 <= k <= len(X):
        raise ValueError(f"k must be within 1..{len(X)}, got {k}")
    rng = np.random.default_rng(seed)
    for attempt in range(2):
        res, it = _lloyd(X, kmeans_pp_init(X, k, rng), max_iter)
        if res is not None:
            return KMeansResult(res[0], res[1], res[2], it)
    raise DegenerateCluster(f"a cluster emptied twice (k={k}, {len(X)} points)")
