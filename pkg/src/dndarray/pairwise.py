"""Euclidean distance matrices by quadratic expansion.

``cdist`` keeps its own row block and passes a travelling block around a
ring: send to ``rank + 1``, receive from ``rank - 1``. After ``p`` compute
rounds (``p - 1`` shifts) every rank has filled all column windows of its
output rows.
"""
from __future__ import annotations

import numpy as np

from .distribution import chunk_map
from .ndcore import DndArray, matmul_local

__all__ = ["cdist", "cdist_xy", "squared_distances"]

# entries whose expanded value falls below this fraction of ||a||^2 + ||b||^2
# are recomputed from explicit differences (cancellation guard)
_RECOMPUTE_RATIO = 1e-6


def _row_norms(a: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", a, a)


def squared_distances(a: np.ndarray, b: np.ndarray, a_norms=None, b_norms=None) -> np.ndarray:
    """``||a_i - b_j||^2`` for two local row blocks, clamped at zero."""
    a_norms = _row_norms(a) if a_norms is None else a_norms
    b_norms = _row_norms(b) if b_norms is None else b_norms
    scale = a_norms[:, None] + b_norms[None, :]
    d2 = scale - 2.0 * matmul_local(a, np.ascontiguousarray(b.T))
    ii, jj = np.nonzero(d2 <= _RECOMPUTE_RATIO * scale)
    if ii.size:
        diff = a[ii] - b[jj]
        d2[ii, jj] = np.einsum("ij,ij->i", diff, diff)
    np.maximum(d2, 0.0, out=d2)
    return d2


def _pack(origin: int, norms: np.ndarray, block: np.ndarray) -> np.ndarray:
    return np.concatenate(([float(origin), float(block.shape[0])], norms, block.reshape(-1)))


def _unpack(buf: np.ndarray, m: int, dtype):
    origin, rows = int(buf[0]), int(buf[1])
    norms = buf[2 : 2 + rows]
    block = buf[2 + rows :].reshape(rows, m).astype(dtype, copy=False)
    return origin, norms, block


def cdist(x: DndArray) -> DndArray:
    """Pairwise distances between all rows of ``x``; result is ``n x n``, split=0."""
    if x.ndim != 2:
        raise ValueError(f"cdist expects a 2-d array, got {x.ndim}-d")
    n, m = x.shape
    if n == 0:
        raise ValueError("cdist of an empty array")
    if x.split != 0:
        x = x.resplit(0)
    comm = x.comm
    rank, p = comm.rank, comm.size
    rows = chunk_map(n, p)

    tile = x.larray.astype(np.float64, copy=False)
    norms = _row_norms(tile)
    out = np.empty((tile.shape[0], n), dtype=np.float64)

    origin, b_norms, block = rank, norms, tile
    for ring_round in range(p):
        lo, hi = rows.bounds(origin)
        g = squared_distances(tile, block, norms, b_norms)
        if origin == rank:
            np.fill_diagonal(g, 0.0)
        out[:, lo:hi] = np.sqrt(g)
        if ring_round < p - 1:
            buf = comm.sendrecv((rank + 1) % p, _pack(origin, b_norms, block), (rank - 1) % p)
            origin, b_norms, block = _unpack(buf, m, np.float64)
    return DndArray(out, (n, n), 0, comm)


def cdist_xy(x: DndArray, y: DndArray, squared: bool = False) -> DndArray:
    """Distances from the rows of ``x`` (split=0) to the rows of replicated ``y``.

    Purely local once ``y`` is replicated on every rank.
    """
    if x.ndim != 2 or y.ndim != 2:
        raise ValueError("cdist_xy expects 2-d arrays")
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"feature mismatch: x has {x.shape[1]} columns, y has {y.shape[1]}")
    if x.split != 0:
        x = x.resplit(0)
    if y.split is not None:
        y = y.resplit(None)
    d2 = squared_distances(x.larray.astype(np.float64, copy=False), y.larray.astype(np.float64, copy=False))
    return DndArray(d2 if squared else np.sqrt(d2), (x.shape[0], y.shape[0]), 0, x.comm)
