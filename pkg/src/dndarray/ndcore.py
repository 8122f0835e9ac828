"""The distributed n-dimensional array and its numpy-like surface."""
from __future__ import annotations

import numbers
import operator
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .distribution import chunk_map, extract_chunk, place_chunk
from .transport import Communicator, get_comm

__all__ = [
    "DndArray",
    "array",
    "zeros",
    "ones",
    "full",
    "arange",
    "random_uniform",
    "map_elementwise",
    "zip_elementwise",
    "reduce",
    "resplit",
    "matmul_local",
    "sqrt",
    "sanitize_split",
    "resolve_dtype",
]

_DTYPES = {"f64": np.float64, "f32": np.float32, "float64": np.float64, "float32": np.float32}

Split = Optional[int]


def resolve_dtype(dtype) -> np.dtype:
    if dtype is None:
        return np.dtype(np.float64)
    if isinstance(dtype, str) and dtype in _DTYPES:
        return np.dtype(_DTYPES[dtype])
    return np.dtype(dtype)


def sanitize_split(split: Split, ndim: int) -> Split:
    if split is None:
        return None
    if not isinstance(split, numbers.Integral):
        raise TypeError(f"split must be an int or None, got {type(split).__name__}")
    split = int(split)
    if split < 0:
        split += ndim
    if not 0 <= split < ndim:
        raise ValueError(f"split axis {split} out of range for {ndim}-d array")
    return split


def _normalize_axis(axis, ndim: int) -> Optional[int]:
    if axis is None:
        return None
    axis = int(axis)
    if axis < 0:
        axis += ndim
    if not 0 <= axis < ndim:
        raise ValueError(f"axis {axis} out of range for {ndim}-d array")
    return axis


def local_shape(shape: Sequence[int], split: Split, comm: Communicator) -> Tuple[int, ...]:
    shape = tuple(shape)
    if split is None:
        return shape
    lshape = list(shape)
    lshape[split] = chunk_map(shape[split], comm.size).extents[comm.rank]
    return tuple(lshape)


def _local_slice(shape: Sequence[int], split: Split, comm: Communicator):
    if split is None:
        return tuple(slice(None) for _ in shape)
    lo, hi = chunk_map(shape[split], comm.size).bounds(comm.rank)
    index = [slice(None)] * len(shape)
    index[split] = slice(lo, hi)
    return tuple(index)


class DndArray:
    """Dense array decomposed along at most one axis over the ranks of ``comm``.

    Each rank owns a C-contiguous ``larray`` tile. With ``split=None`` every
    rank holds an identical full copy; with ``split=s`` the tile covers this
    rank's chunk of axis ``s`` according to :func:`~dndarray.distribution.chunk_map`.
    """

    __array_priority__ = 100

    def __init__(self, tile: np.ndarray, shape: Sequence[int], split: Split, comm: Communicator):
        shape = tuple(int(s) for s in shape)
        split = sanitize_split(split, len(shape))
        tile = np.ascontiguousarray(tile)
        expected = local_shape(shape, split, comm)
        if tile.shape != expected:
            raise ValueError(
                f"rank {comm.rank}: tile shape {tile.shape} does not match chunk {expected} "
                f"of global shape {shape} split={split}"
            )
        self._tile = tile
        self._shape = shape
        self._split = split
        self._comm = comm

    # -- attributes ------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._shape

    @property
    def lshape(self) -> Tuple[int, ...]:
        return self._tile.shape

    @property
    def split(self) -> Split:
        return self._split

    @property
    def comm(self) -> Communicator:
        return self._comm

    @property
    def dtype(self) -> np.dtype:
        return self._tile.dtype

    @property
    def larray(self) -> np.ndarray:
        """Rank-local tile."""
        return self._tile

    @property
    def ndim(self) -> int:
        return len(self._shape)

    @property
    def size(self) -> int:
        return int(np.prod(self._shape, dtype=np.int64))

    @property
    def chunks(self):
        """Chunk map along the split axis, or ``None`` when replicated."""
        if self._split is None:
            return None
        return chunk_map(self._shape[self._split], self._comm.size)

    def __repr__(self):
        return (
            f"DndArray(shape={self._shape}, lshape={self.lshape}, split={self._split}, "
            f"dtype={self.dtype}, rank={self._comm.rank}/{self._comm.size})"
        )

    def __len__(self):
        return self._shape[0]

    # -- conversion ------------------------------------------------------

    def numpy(self) -> np.ndarray:
        """Gathered global content as a numpy array (collective)."""
        if self._split is None:
            return self._tile.copy()
        return resplit(self, None).larray

    def resplit(self, new_split: Split) -> "DndArray":
        return resplit(self, new_split)

    def astype(self, dtype) -> "DndArray":
        return DndArray(self._tile.astype(resolve_dtype(dtype)), self._shape, self._split, self._comm)

    def copy(self) -> "DndArray":
        return DndArray(self._tile.copy(), self._shape, self._split, self._comm)

    # -- reductions ------------------------------------------------------

    def sum(self, axis=None):
        return reduce(self, "sum", axis)

    def min(self, axis=None):
        return reduce(self, "min", axis)

    def max(self, axis=None):
        return reduce(self, "max", axis)

    def mean(self, axis=None):
        from .moments import mean

        return mean(self, axis)

    def var(self, axis=None, ddof=0):
        from .moments import var

        return var(self, axis, ddof)

    def std(self, axis=None, ddof=0):
        from .moments import std

        return std(self, axis, ddof)

    # -- arithmetic ------------------------------------------------------

    def _binary(self, other, op, reflected=False):
        if isinstance(other, DndArray):
            return zip_elementwise(other, self, op) if reflected else zip_elementwise(self, other, op)
        if np.isscalar(other) or (isinstance(other, np.ndarray) and other.ndim == 0):
            if reflected:
                return map_elementwise(self, lambda t: op(other, t))
            return map_elementwise(self, lambda t: op(t, other))
        return NotImplemented

    def __add__(self, other):
        return self._binary(other, operator.add)

    def __radd__(self, other):
        return self._binary(other, operator.add, reflected=True)

    def __sub__(self, other):
        return self._binary(other, operator.sub)

    def __rsub__(self, other):
        return self._binary(other, operator.sub, reflected=True)

    def __mul__(self, other):
        return self._binary(other, operator.mul)

    def __rmul__(self, other):
        return self._binary(other, operator.mul, reflected=True)

    def __truediv__(self, other):
        return self._binary(other, operator.truediv)

    def __rtruediv__(self, other):
        return self._binary(other, operator.truediv, reflected=True)

    def __pow__(self, other):
        return self._binary(other, operator.pow)

    def __neg__(self):
        return map_elementwise(self, operator.neg)

    def __abs__(self):
        return map_elementwise(self, np.abs)


# -- factories -------------------------------------------------------------


def array(obj, split: Split = None, dtype=None, comm: Optional[Communicator] = None) -> DndArray:
    """Distribute global data that every rank holds in full; each rank keeps its chunk."""
    comm = get_comm() if comm is None else comm
    data = np.asarray(obj, dtype=None if dtype is None else resolve_dtype(dtype))
    split = sanitize_split(split, data.ndim)
    return DndArray(data[_local_slice(data.shape, split, comm)].copy(), data.shape, split, comm)


def full(shape, fill_value, split: Split = None, dtype=None, comm: Optional[Communicator] = None) -> DndArray:
    comm = get_comm() if comm is None else comm
    shape = (shape,) if isinstance(shape, numbers.Integral) else tuple(shape)
    split = sanitize_split(split, len(shape))
    tile = np.full(local_shape(shape, split, comm), fill_value, dtype=resolve_dtype(dtype))
    return DndArray(tile, shape, split, comm)


def zeros(shape, split: Split = None, dtype=None, comm: Optional[Communicator] = None) -> DndArray:
    return full(shape, 0, split, dtype, comm)


def ones(shape, split: Split = None, dtype=None, comm: Optional[Communicator] = None) -> DndArray:
    return full(shape, 1, split, dtype, comm)


def arange(n: int, split: Split = None, dtype=None, comm: Optional[Communicator] = None) -> DndArray:
    comm = get_comm() if comm is None else comm
    split = sanitize_split(split, 1)
    lo, hi = (0, n) if split is None else chunk_map(n, comm.size).bounds(comm.rank)
    return DndArray(np.arange(lo, hi, dtype=resolve_dtype(dtype)), (n,), split, comm)


def random_uniform(shape, split: Split = None, seed: int = 0, dtype=None, comm: Optional[Communicator] = None) -> DndArray:
    """Uniform ``[0, 1)`` samples whose global content depends only on ``(shape, seed)``."""
    comm = get_comm() if comm is None else comm
    shape = (shape,) if isinstance(shape, numbers.Integral) else tuple(shape)
    split = sanitize_split(split, len(shape))
    # every rank draws the whole logical sequence and keeps its slice
    data = np.random.default_rng(seed).random(shape)
    tile = data[_local_slice(shape, split, comm)].astype(resolve_dtype(dtype))
    return DndArray(tile, shape, split, comm)


# -- elementwise -------------------------------------------------------------


def map_elementwise(a: DndArray, f: Callable[[np.ndarray], np.ndarray]) -> DndArray:
    out = np.asarray(f(a.larray))
    if out.shape != a.lshape:
        raise ValueError(f"elementwise function changed tile shape {a.lshape} -> {out.shape}")
    return DndArray(out, a.shape, a.split, a.comm)


def zip_elementwise(a: DndArray, b: DndArray, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> DndArray:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape} (no broadcasting)")
    if a.split != b.split:
        raise ValueError(f"split mismatch: {a.split} vs {b.split}; resplit one operand first")
    if a.comm is not b.comm:
        raise ValueError("operands live on different communicators")
    out = np.asarray(f(a.larray, b.larray))
    if out.shape != a.lshape:
        raise ValueError(f"elementwise function changed tile shape {a.lshape} -> {out.shape}")
    return DndArray(out, a.shape, a.split, a.comm)


def sqrt(a: DndArray) -> DndArray:
    return map_elementwise(a, np.sqrt)


# -- reductions --------------------------------------------------------------

_REDUCERS = {
    "sum": (np.sum, np.add),
    "min": (np.min, np.minimum),
    "max": (np.max, np.maximum),
}


def _identity(op: str, dtype: np.dtype):
    if op == "sum":
        return dtype.type(0)
    if np.issubdtype(dtype, np.integer):
        info = np.iinfo(dtype)
        return info.max if op == "min" else info.min
    return dtype.type(np.inf if op == "min" else -np.inf)


def reduce(a: DndArray, op: str, axis=None):
    """Global ``sum``/``min``/``max``.

    ``axis=None`` returns a scalar replicated on every rank. Reducing a
    non-split axis is purely local and keeps the distribution; reducing the
    split axis combines partial results and returns a replicated array.
    """
    if op not in _REDUCERS:
        raise ValueError(f"unknown reduction {op!r}; expected one of {sorted(_REDUCERS)}")
    local, combine = _REDUCERS[op]
    axis = _normalize_axis(axis, a.ndim)
    tile = a.larray
    dtype = np.dtype(local(np.zeros(1, dtype=a.dtype)).dtype)

    reduced_extent = a.size if axis is None else a.shape[axis]
    if op != "sum" and reduced_extent == 0:
        raise ValueError(f"{op} of an empty axis has no identity")

    if axis is None:
        part = local(tile) if tile.size else _identity(op, dtype)
        if a.split is None:
            return part
        return a.comm.allreduce(part, combine, _identity(op, dtype))

    if axis != a.split:
        new_shape = a.shape[:axis] + a.shape[axis + 1 :]
        new_split = a.split
        if new_split is not None and axis < new_split:
            new_split -= 1
        return DndArray(local(tile, axis=axis), new_shape, new_split, a.comm)

    new_shape = a.shape[:axis] + a.shape[axis + 1 :]
    if tile.shape[axis] == 0:
        part = np.full(new_shape, _identity(op, dtype), dtype=dtype)
    else:
        part = np.asarray(local(tile, axis=axis))
    result = a.comm.allreduce(part, combine, np.full(new_shape, _identity(op, dtype), dtype=dtype))
    return DndArray(np.asarray(result), new_shape, None, a.comm)


# -- redistribution ----------------------------------------------------------


def resplit(a: DndArray, new_split: Split) -> DndArray:
    """Redistribute ``a`` along ``new_split`` (or replicate with ``None``).

    Content is preserved bitwise and the result follows the balanced chunk map.
    """
    new_split = sanitize_split(new_split, a.ndim)
    comm, shape, old = a.comm, a.shape, a.split

    if new_split == old:
        return a.copy()

    if old is None:
        return DndArray(a.larray[_local_slice(shape, new_split, comm)].copy(), shape, new_split, comm)

    src_map = chunk_map(shape[old], comm.size)

    if new_split is None:
        # the local tile is exactly this rank's slab along the old split axis
        gathered = comm.allgather_varying(a.larray.reshape(-1))
        out = np.empty(shape, dtype=a.dtype)
        for r, buf in enumerate(gathered):
            lo, hi = src_map.bounds(r)
            place_chunk(out, old, lo, hi, buf.astype(a.dtype, copy=False))
        return DndArray(out, shape, None, comm)

    dst_map = chunk_map(shape[new_split], comm.size)
    parts = [extract_chunk(a.larray, new_split, *dst_map.bounds(d)) for d in range(comm.size)]
    received = comm.alltoall_varying(parts)
    out = np.empty(local_shape(shape, new_split, comm), dtype=a.dtype)
    for r, buf in enumerate(received):
        lo, hi = src_map.bounds(r)
        place_chunk(out, old, lo, hi, buf.astype(a.dtype, copy=False))
    return DndArray(out, shape, new_split, comm)


def matmul_local(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense row-major product of two rank-local 2-d tiles."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul_local expects 2-d tiles, got {a.ndim}-d and {b.ndim}-d")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    return np.ascontiguousarray(a @ b)
