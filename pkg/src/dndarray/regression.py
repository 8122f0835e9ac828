"""LASSO by cyclic coordinate descent on row-split data.

The objective is ``||y - X w||^2 + lam * ||w[1:]||_1`` where column 0 of
``X`` is an all-ones bias column whose weight is not penalised. Features are
used as given; scale them beforehand if that matters to you.

Coefficients are replicated; rows of ``X``, ``y`` and the residual stay
rank-local, so each coordinate update costs one scalar allreduce.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .base import as_dndarray, as_target, check_features, check_finite, to_output
from .ndcore import DndArray

__all__ = ["LassoModel", "soft_threshold", "lasso", "objective", "predict", "Lasso"]


@dataclass
class LassoModel:
    w: np.ndarray
    lam: float
    objective_trace: List[float] = field(default_factory=list)
    sweeps_run: int = 0


def soft_threshold(rho, t):
    """Proximal map of ``t * |.|``: shrink towards zero by ``t``."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be non-negative")
    return np.sign(rho) * np.maximum(np.abs(rho) - t, 0.0)


def _add(a, b):
    return a + b


def objective(x: DndArray, y: DndArray, w: np.ndarray, lam: float) -> float:
    r = y.larray - x.larray @ w
    return x.comm.allreduce(float(r @ r), _add, 0.0) + lam * float(np.sum(np.abs(w[1:])))


def _check_bias_column(x: DndArray) -> None:
    local_ok = x.larray.shape[1] > 0 and bool(np.all(x.larray[:, 0] == 1.0))
    ok = x.comm.allreduce(local_ok or x.larray.shape[0] == 0, lambda a, b: a and b, True)
    if not ok:
        raise ValueError("column 0 of x must be the all-ones bias column")


def lasso(x: DndArray, y: DndArray, lam: float, sweeps: int = 20, tol: float = 0.0) -> LassoModel:
    """Fit the weights by cyclic coordinate descent.

    Each coordinate is minimised exactly: because the squared loss carries no
    one-half factor the shrinkage threshold is ``lam / 2``. A coordinate whose
    column is identically zero is skipped and keeps weight 0.
    """
    if x.ndim != 2:
        raise ValueError(f"x must be 2-d, got shape {x.shape}")
    if y.ndim != 1 or y.shape[0] != x.shape[0]:
        raise ValueError(f"y of shape {y.shape} does not match {x.shape[0]} rows of x")
    if lam < 0:
        raise ValueError(f"lam must be non-negative, got {lam}")
    if x.shape[0] < 1:
        raise ValueError("lasso needs at least one sample")
    if x.split != 0:
        x = x.resplit(0)
    if y.split != 0:
        y = y.resplit(0)
    check_finite(x)
    check_finite(y)
    _check_bias_column(x)

    comm = x.comm
    m = x.shape[1]
    columns = np.ascontiguousarray(x.larray.T, dtype=np.float64)
    local_sq = np.einsum("ij,ij->i", columns, columns)
    sq = comm.allreduce(local_sq, _add, np.zeros(m))
    r = y.larray.astype(np.float64, copy=True)
    w = np.zeros(m)
    model = LassoModel(w=w, lam=float(lam))

    for _ in range(sweeps):
        max_change = 0.0
        for j in range(m):
            if sq[j] == 0.0:
                continue
            xj = columns[j]
            rho = comm.allreduce(float(xj @ r + w[j] * local_sq[j]), _add, 0.0)
            if j == 0:
                new = rho / sq[j]
            else:
                new = float(soft_threshold(rho, lam / 2.0)) / sq[j]
            change = w[j] - new
            if change != 0.0:
                r += change * xj
                w[j] = new
            max_change = max(max_change, abs(change))
        rss = comm.allreduce(float(r @ r), _add, 0.0)
        model.objective_trace.append(rss + lam * float(np.sum(np.abs(w[1:]))))
        model.sweeps_run += 1
        if max_change < tol:
            break
    return model


def predict(model: LassoModel, x: DndArray) -> DndArray:
    """``X w`` row by row; no communication."""
    if x.ndim != 2 or x.shape[1] != model.w.shape[0]:
        raise ValueError(f"expected {model.w.shape[0]} columns, got array of shape {x.shape}")
    if x.split != 0:
        x = x.resplit(0)
    return DndArray(x.larray.astype(np.float64, copy=False) @ model.w, (x.shape[0],), 0, x.comm)


class Lasso(RegressorMixin, BaseEstimator):
    """Distributed LASSO estimator with an unpenalised bias column.

    ``X`` must carry the bias as its first, all-ones column. ``coef_[0]`` is
    the bias weight.
    """

    def __init__(self, lam=1.0, max_sweeps=20, tol=0.0):
        self.lam = lam
        self.max_sweeps = max_sweeps
        self.tol = tol

    def fit(self, X, y):
        x, _ = as_dndarray(X, split=0)
        self.model_ = lasso(x, as_target(y, x), self.lam, self.max_sweeps, self.tol)
        self.coef_ = self.model_.w
        self.objective_trace_ = list(self.model_.objective_trace)
        self.n_iter_ = self.model_.sweeps_run
        self.n_features_in_ = x.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        x, _ = as_dndarray(X, split=0)
        check_features(x, self.n_features_in_)
        return to_output(predict(self.model_, x), X)
