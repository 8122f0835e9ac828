"""Balanced one-dimensional decomposition and strided block packing.

Tiles are C-contiguous numpy arrays. Packing copies a sub-block into a flat
contiguous buffer so that no stride metadata ever crosses the wire.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import accumulate
from typing import Tuple

import numpy as np

__all__ = ["ChunkMap", "chunk_map", "extract_chunk", "place_chunk", "permute_leading", "permute_back"]


@dataclass(frozen=True)
class ChunkMap:
    """Per-rank ``(offset, extent)`` table along a split axis.

    Extents differ by at most one; the larger chunks go to the lowest ranks.
    """

    global_extent: int
    size: int
    offsets: Tuple[int, ...]
    extents: Tuple[int, ...]

    def bounds(self, rank: int) -> Tuple[int, int]:
        lo = self.offsets[rank]
        return lo, lo + self.extents[rank]


def chunk_map(n: int, p: int) -> ChunkMap:
    if n < 0:
        raise ValueError(f"extent must be non-negative, got {n}")
    if p < 1:
        raise ValueError(f"rank count must be positive, got {p}")
    base, rem = divmod(n, p)
    extents = (base + 1,) * rem + (base,) * (p - rem)
    offsets = tuple(accumulate(extents[:-1], initial=0))
    return ChunkMap(n, p, offsets, extents)


def _slice_along(ndim: int, axis: int, lo: int, hi: int):
    index = [slice(None)] * ndim
    index[axis] = slice(lo, hi)
    return tuple(index)


def _check_range(tile: np.ndarray, axis: int, lo: int, hi: int) -> None:
    if not 0 <= axis < tile.ndim:
        raise IndexError(f"axis {axis} out of range for {tile.ndim}-d tile")
    if not 0 <= lo <= hi <= tile.shape[axis]:
        raise IndexError(f"slice [{lo}:{hi}] out of range for extent {tile.shape[axis]} along axis {axis}")


def extract_chunk(tile: np.ndarray, axis: int, lo: int, hi: int) -> np.ndarray:
    """Copy ``tile[..., lo:hi, ...]`` (along ``axis``) into a flat row-major buffer."""
    _check_range(tile, axis, lo, hi)
    return np.array(tile[_slice_along(tile.ndim, axis, lo, hi)], order="C", copy=True).reshape(-1)


def place_chunk(tile: np.ndarray, axis: int, lo: int, hi: int, buf: np.ndarray) -> None:
    """Inverse of :func:`extract_chunk`: overwrite the slice in place from ``buf``."""
    _check_range(tile, axis, lo, hi)
    shape = list(tile.shape)
    shape[axis] = hi - lo
    buf = np.asarray(buf)
    if buf.size != int(np.prod(shape)):
        raise ValueError(f"buffer holds {buf.size} elements, slice needs {int(np.prod(shape))}")
    tile[_slice_along(tile.ndim, axis, lo, hi)] = buf.reshape(shape)


def permute_leading(tile: np.ndarray, axis: int) -> np.ndarray:
    """Physically reorder ``tile`` so that ``axis`` becomes the first dimension."""
    if not 0 <= axis < tile.ndim:
        raise IndexError(f"axis {axis} out of range for {tile.ndim}-d tile")
    return np.array(np.moveaxis(tile, axis, 0), order="C", copy=True)


def permute_back(tile: np.ndarray, axis: int) -> np.ndarray:
    """Undo :func:`permute_leading` for the same ``axis``."""
    if not 0 <= axis < tile.ndim:
        raise IndexError(f"axis {axis} out of range for {tile.ndim}-d tile")
    return np.array(np.moveaxis(tile, 0, axis), order="C", copy=True)
