"""Lloyd's k-means over row-split data."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from .base import as_dndarray, check_features, check_finite, to_output
from .ndcore import DndArray
from .pairwise import cdist_xy

__all__ = ["KMeansModel", "init_centroids", "lloyd", "predict", "KMeans"]


@dataclass
class KMeansModel:
    k: int
    centroids: np.ndarray
    inertia_trace: List[float] = field(default_factory=list)
    iterations_run: int = 0
    seed: int = 0


def init_centroids(x: DndArray, k: int, seed: int) -> np.ndarray:
    """Pick ``k`` distinct global rows with a seeded draw and replicate them.

    The draw only depends on ``(n, k, seed)``, never on the decomposition.
    """
    n, m = x.shape
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    picks = np.random.default_rng(seed).choice(n, size=k, replace=False)
    lo, hi = x.chunks.bounds(x.comm.rank)
    mine = np.flatnonzero((picks >= lo) & (picks < hi))
    local_rows = x.larray[picks[mine] - lo].astype(np.float64)
    order = x.comm.allgather_varying(mine.astype(np.float64))
    rows = x.comm.allgather_varying(local_rows.reshape(-1))
    centroids = np.empty((k, m), dtype=np.float64)
    for idx, vals in zip(order, rows):
        centroids[idx.astype(np.int64)] = vals.reshape(-1, m)
    return centroids


def _assign(x: DndArray, centroids: np.ndarray) -> np.ndarray:
    c = DndArray(centroids, centroids.shape, None, x.comm)
    d2 = cdist_xy(x, c, squared=True).larray
    # argmin returns the first minimum: ties go to the lowest centroid index
    return np.argmin(d2, axis=1) if d2.shape[0] else np.zeros(0, dtype=np.int64)


def _add(a, b):
    return a + b


def lloyd(x: DndArray, k: int, max_iter: int = 30, tol: float = 0.0, seed: int = 0) -> KMeansModel:
    """Run Lloyd iterations until ``max_iter`` or a centroid shift below ``tol``.

    ``inertia_trace[t]`` is the objective of the assignment made against the
    centroids entering iteration ``t``. Empty clusters keep their centroid.
    """
    if x.ndim != 2:
        raise ValueError(f"k-means expects a 2-d array, got {x.ndim}-d")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    if x.split != 0:
        x = x.resplit(0)
    check_finite(x)
    comm = x.comm
    tile = x.larray.astype(np.float64, copy=False)
    m = x.shape[1]

    centroids = init_centroids(x, k, seed)
    model = KMeansModel(k=k, centroids=centroids, seed=seed)
    zero_stats = np.zeros((k, m + 1))
    for _ in range(max_iter):
        labels = _assign(x, centroids)
        stats = np.zeros((k, m + 1))
        np.add.at(stats[:, :m], labels, tile)
        np.add.at(stats[:, m], labels, 1.0)
        stats = comm.allreduce(stats, _add, zero_stats)

        diff = tile - centroids[labels]
        inertia = comm.allreduce(float(np.einsum("ij,ij->", diff, diff)), _add, 0.0)
        model.inertia_trace.append(inertia)

        counts = stats[:, m]
        updated = centroids.copy()
        filled = counts > 0
        updated[filled] = stats[filled, :m] / counts[filled, None]
        shift = float(np.max(np.abs(updated - centroids)))
        centroids = updated
        model.iterations_run += 1
        if shift < tol:
            break
    model.centroids = centroids
    return model


def predict(model: KMeansModel, x: DndArray) -> DndArray:
    """Nearest-centroid label per row, split like the rows of ``x``."""
    if x.ndim != 2 or x.shape[1] != model.centroids.shape[1]:
        raise ValueError(
            f"expected {model.centroids.shape[1]} features, got array of shape {x.shape}"
        )
    if x.split != 0:
        x = x.resplit(0)
    labels = _assign(x, model.centroids).astype(np.int64)
    return DndArray(labels, (x.shape[0],), 0, x.comm)


class KMeans(ClusterMixin, BaseEstimator):
    """Distributed k-means estimator.

    Accepts a :class:`DndArray` (each rank passes its own handle) or a plain
    array holding the full data on every rank. Outputs follow the input kind.

    Parameters
    ----------
    k : int
        Number of clusters.
    max_iter : int
        Lloyd iterations to run.
    tol : float
        Stop early once no centroid coordinate moves by ``tol`` or more.
        The default ``0`` always runs ``max_iter`` iterations.
    seed : int
        Seed of the initial centroid draw.
    """

    def __init__(self, k=8, max_iter=30, tol=0.0, seed=0):
        self.k = k
        self.max_iter = max_iter
        self.tol = tol
        self.seed = seed

    def fit(self, X, y=None):
        x, _ = as_dndarray(X, split=0)
        self.model_ = lloyd(x, self.k, self.max_iter, self.tol, self.seed)
        self.cluster_centers_ = self.model_.centroids
        self.inertia_trace_ = list(self.model_.inertia_trace)
        self.n_iter_ = self.model_.iterations_run
        self.n_features_in_ = x.shape[1]
        self.labels_ = to_output(predict(self.model_, x), X)
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        x, _ = as_dndarray(X, split=0)
        check_features(x, self.n_features_in_)
        return to_output(predict(self.model_, x), X)
