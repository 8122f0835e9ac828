"""Input validation shared by the estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .ndcore import DndArray, array


def as_dndarray(X, split=0, ensure_2d=True):
    """Return ``(DndArray, was_distributed)`` for estimator input.

    Plain arrays are validated with scikit-learn's ``check_array`` and taken
    to hold the full global data on every rank of the current communicator.
    """
    if isinstance(X, DndArray):
        if ensure_2d and X.ndim != 2:
            raise ValueError(f"expected a 2-d array, got shape {X.shape}")
        if X.split != split:
            X = X.resplit(split)
        return X, True
    data = check_array(X, dtype=[np.float64, np.float32], ensure_2d=ensure_2d, ensure_min_samples=1)
    return array(data, split=split), False


def as_target(y, x: DndArray):
    """Split a target vector exactly like the rows of ``x``."""
    if isinstance(y, DndArray):
        if y.ndim != 1:
            raise ValueError(f"target must be 1-d, got shape {y.shape}")
        return y if y.split == 0 else y.resplit(0)
    data = check_array(y, dtype=[np.float64, np.float32], ensure_2d=False)
    if data.ndim != 1:
        raise ValueError(f"target must be 1-d, got shape {data.shape}")
    return array(data, split=0, comm=x.comm)


def check_finite(x: DndArray) -> None:
    """Raise on NaN or infinity anywhere in ``x`` (collective)."""
    bad = x.comm.allreduce(bool(not np.all(np.isfinite(x.larray))), lambda a, b: a or b, False)
    if bad:
        raise ValueError("input contains NaN or infinity")


def check_features(x: DndArray, expected: int) -> None:
    if x.shape[1] != expected:
        raise ValueError(f"x has {x.shape[1]} features, but the estimator was fitted with {expected}")


def to_output(result: DndArray, X):
    """Hand back a ``DndArray`` for distributed input, a gathered array otherwise."""
    return result if isinstance(X, DndArray) else result.numpy()
