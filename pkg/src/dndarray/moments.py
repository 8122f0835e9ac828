"""Single-pass mean / variance / standard deviation over distributed arrays.

Each rank summarises its tile into a ``(count, mean, M2)`` state with a
vectorised Welford update, and the states are merged with the pairwise
update rule through a custom allreduce combiner. Neither step ever forms
``sum(x**2)``, which is what keeps large-offset data accurate.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .ndcore import DndArray, _normalize_axis

__all__ = ["MomentState", "local_moments", "combine", "moment_state", "summary", "mean", "var", "std"]

# lanes of the flattened (axis=None) Welford sweep
_LANES = 512


@dataclass
class MomentState:
    """Sample count, running mean and sum of squared deviations from the mean.

    ``mean`` and ``m2`` are scalars for whole-array statistics or arrays for
    per-slot statistics along an axis. ``n == 0`` is the identity element.
    """

    n: int
    mean: Union[float, np.ndarray]
    m2: Union[float, np.ndarray]

    @classmethod
    def identity(cls, shape=()) -> "MomentState":
        if shape == ():
            return cls(0, 0.0, 0.0)
        return cls(0, np.zeros(shape), np.zeros(shape))

    def variance(self, ddof: int = 0):
        if self.n - ddof <= 0:
            raise ValueError(f"variance needs more than ddof={ddof} samples, have {self.n}")
        return self.m2 / (self.n - ddof)


def _welford_rows(rows: np.ndarray) -> MomentState:
    """Welford update over the leading axis, all remaining slots at once."""
    mean = np.zeros(rows.shape[1:], dtype=np.float64)
    m2 = np.zeros(rows.shape[1:], dtype=np.float64)
    n = 0
    for x in rows:
        n += 1
        delta = x - mean
        mean += delta / n
        m2 += delta * (x - mean)
    return MomentState(n, mean, m2)


def combine(a: MomentState, b: MomentState) -> MomentState:
    """Merge two partial states as if their samples had been concatenated."""
    if b.n == 0:
        return a
    if a.n == 0:
        return b
    if np.shape(a.mean) != np.shape(b.mean):
        raise ValueError(f"cannot combine moment states of shapes {np.shape(a.mean)} and {np.shape(b.mean)}")
    n = a.n + b.n
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.n / n)
    m2 = a.m2 + b.m2 + delta * delta * (a.n * b.n / n)
    return MomentState(n, mean, m2)


def local_moments(data: np.ndarray, axis: Optional[int] = None) -> MomentState:
    """One pass over a rank-local tile.

    ``axis=None`` summarises the flattened tile into scalars; an integer
    axis yields one state per slot of the remaining dimensions.
    """
    data = np.asarray(data, dtype=np.float64)
    if axis is not None:
        rows = np.moveaxis(data, axis, 0)
        if rows.shape[0] == 0:
            return MomentState.identity(rows.shape[1:])
        return _welford_rows(rows)

    flat = data.reshape(-1)
    if flat.size == 0:
        return MomentState.identity()
    lanes = min(_LANES, flat.size)
    full_rows = flat.size // lanes
    body = _welford_rows(flat[: full_rows * lanes].reshape(full_rows, lanes))
    tail = flat[full_rows * lanes :]

    state = MomentState.identity()
    for j in range(lanes):
        lane = MomentState(body.n, float(body.mean[j]), float(body.m2[j]))
        if j < tail.size:
            lane = combine(lane, MomentState(1, float(tail[j]), 0.0))
        state = combine(state, lane)
    return state


def moment_state(a: DndArray, axis: Optional[int] = None, combiner: Callable = combine) -> MomentState:
    """Global state for ``axis=None`` or the split axis; local per-slot state otherwise."""
    axis = _normalize_axis(axis, a.ndim)
    state = local_moments(a.larray, axis)
    if a.split is None or (axis is not None and axis != a.split):
        return state
    identity = MomentState.identity(np.shape(state.mean))
    return a.comm.allreduce(state, combiner, identity)


def _place(a: DndArray, axis: Optional[int], values):
    if axis is None:
        return float(values)
    shape = a.shape[:axis] + a.shape[axis + 1 :]
    split = a.split
    if split == axis:
        split = None
    elif split is not None and axis < split:
        split -= 1
    return DndArray(np.asarray(values, dtype=np.float64), shape, split, a.comm)


def _global_count(a: DndArray, axis: Optional[int]) -> int:
    return a.size if axis is None else a.shape[axis]


def mean(a: DndArray, axis: Optional[int] = None):
    axis = _normalize_axis(axis, a.ndim)
    if _global_count(a, axis) == 0:
        raise ValueError("mean of an empty array")
    return _place(a, axis, moment_state(a, axis).mean)


def var(a: DndArray, axis: Optional[int] = None, ddof: int = 0):
    """Population variance by default; ``ddof=1`` gives the sample variance."""
    axis = _normalize_axis(axis, a.ndim)
    n = _global_count(a, axis)
    if n <= ddof:
        raise ValueError(f"variance needs more than ddof={ddof} samples, have {n}")
    state = moment_state(a, axis)
    return _place(a, axis, state.m2 / (n - ddof))


def std(a: DndArray, axis: Optional[int] = None, ddof: int = 0):
    axis = _normalize_axis(axis, a.ndim)
    n = _global_count(a, axis)
    if n <= ddof:
        raise ValueError(f"variance needs more than ddof={ddof} samples, have {n}")
    state = moment_state(a, axis)
    return _place(a, axis, np.sqrt(state.m2 / (n - ddof)))


def summary(a: DndArray, axis: Optional[int] = None, ddof: int = 0, combiner: Callable = combine) -> dict:
    """``mean``, ``var`` and ``std`` from a single pass, placed like :func:`mean`."""
    axis = _normalize_axis(axis, a.ndim)
    n = _global_count(a, axis)
    if n <= ddof:
        raise ValueError(f"variance needs more than ddof={ddof} samples, have {n}")
    state = moment_state(a, axis, combiner)
    variance = state.m2 / (n - ddof)
    return {
        "mean": _place(a, axis, state.mean),
        "var": _place(a, axis, variance),
        "std": _place(a, axis, np.sqrt(variance)),
    }
