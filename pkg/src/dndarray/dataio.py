"""DNB container: a flat little-endian binary layout read in per-rank slices.

Layout::

    b"DNB1" | dtype code (u8: 1=f32, 2=f64) | ndim (u8) | ndim x u64 extents | payload

The payload is the row-major global array. A rank loading with ``split=0``
seeks straight to its chunk's byte range and reads nothing else.
"""
from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .distribution import chunk_map
from .ndcore import DndArray, local_shape, resolve_dtype, sanitize_split
from .transport import Communicator, get_comm

__all__ = ["DnbHeader", "DnbFormatError", "read_header", "save", "load", "csv_to_dnb", "MAGIC"]

MAGIC = b"DNB1"
_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODE_OF = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}


class DnbFormatError(ValueError):
    """Malformed DNB file; ``field`` names the offending part."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class DnbHeader:
    dtype_code: int
    extents: Tuple[int, ...]

    @property
    def ndim(self) -> int:
        return len(self.extents)

    @property
    def dtype(self) -> np.dtype:
        return _CODES[self.dtype_code]

    @property
    def nbytes(self) -> int:
        return 6 + 8 * self.ndim

    @property
    def payload_bytes(self) -> int:
        return self.dtype.itemsize * int(np.prod(self.extents, dtype=np.int64))

    def pack(self) -> bytes:
        return MAGIC + struct.pack(f"<BB{self.ndim}Q", self.dtype_code, self.ndim, *self.extents)


def read_header(path) -> DnbHeader:
    with open(path, "rb") as fh:
        head = fh.read(6)
        if len(head) < 4 or head[:4] != MAGIC:
            raise DnbFormatError("magic", f"expected {MAGIC!r}, found {head[:4]!r}")
        if len(head) < 6:
            raise DnbFormatError("header", "file ends inside the fixed header")
        code, ndim = head[4], head[5]
        if code not in _CODES:
            raise DnbFormatError("dtype_code", f"unknown dtype code {code}")
        raw = fh.read(8 * ndim)
        if len(raw) != 8 * ndim:
            raise DnbFormatError("extents", f"expected {ndim} extents, file ends early")
        header = DnbHeader(code, struct.unpack(f"<{ndim}Q", raw))
    size = os.path.getsize(path)
    expected = header.nbytes + header.payload_bytes
    if size < expected:
        raise DnbFormatError("payload", f"truncated: {size} bytes on disk, header implies {expected}")
    if size > expected:
        raise DnbFormatError("payload", f"{size - expected} trailing bytes after payload")
    return header


def save(a: DndArray, path) -> None:
    """Write ``a`` to ``path`` (collective).

    Rank 0 writes the header and sizes the file; then every rank writes its
    own rows at their byte offset. Arrays split along another axis are
    resplit to axis 0 first.
    """
    dtype = np.dtype(a.dtype)
    if dtype not in _CODE_OF:
        raise TypeError(f"DNB stores float32/float64 only, got {dtype}")
    if a.ndim > 255:
        raise ValueError("DNB supports at most 255 dimensions")
    if a.split not in (None, 0):
        a = a.resplit(0)
    comm = a.comm
    header = DnbHeader(_CODE_OF[dtype], a.shape)
    if comm.rank == 0:
        with open(path, "wb") as fh:
            fh.write(header.pack())
            fh.truncate(header.nbytes + header.payload_bytes)
    comm.barrier()

    if a.split is None:
        writes = comm.rank == 0
        offset_rows = 0
    else:
        writes = a.larray.size > 0
        offset_rows = a.chunks.offsets[comm.rank]
    if writes:
        row_bytes = dtype.itemsize * int(np.prod(a.shape[1:], dtype=np.int64))
        with open(path, "r+b") as fh:
            fh.seek(header.nbytes + offset_rows * row_bytes)
            fh.write(a.larray.astype(dtype.newbyteorder("<"), copy=False).tobytes())
    comm.barrier()


def load(path, split: Optional[int] = 0, comm: Optional[Communicator] = None) -> DndArray:
    """Read a DNB file into a distributed array (collective)."""
    comm = get_comm() if comm is None else comm
    header = read_header(path)
    shape = header.extents
    split = sanitize_split(split, len(shape))
    dtype = header.dtype
    read_split = None if split is None else 0

    lshape = local_shape(shape, read_split, comm)
    row_bytes = dtype.itemsize * int(np.prod(shape[1:], dtype=np.int64))
    first_row = 0 if read_split is None else chunk_map(shape[0], comm.size).offsets[comm.rank]
    count = int(np.prod(lshape, dtype=np.int64))
    with open(path, "rb") as fh:
        fh.seek(header.nbytes + first_row * row_bytes)
        raw = fh.read(count * dtype.itemsize)
    if len(raw) != count * dtype.itemsize:
        raise DnbFormatError("payload", "truncated while reading this rank's chunk")
    tile = np.frombuffer(raw, dtype=dtype).astype(dtype.newbyteorder("="), copy=True).reshape(lshape)
    out = DndArray(tile, shape, read_split, comm)
    if split not in (None, 0):
        out = out.resplit(split)
    return out


def csv_to_dnb(src, dst, dtype="f64", skip_header: bool = False) -> Tuple[int, int]:
    """Convert a rectangular numeric CSV file to a 2-d DNB file.

    Returns the ``(rows, columns)`` written. Ragged rows and unparsable
    fields raise ``ValueError`` naming the 1-based line number.
    """
    dtype = resolve_dtype(dtype)
    if dtype not in _CODE_OF:
        raise TypeError(f"DNB stores float32/float64 only, got {dtype}")
    rows = []
    width = None
    with open(src, newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if skip_header and lineno == 1:
                continue
            if not record or all(not field.strip() for field in record):
                continue
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise ValueError(f"line {lineno}: expected {width} fields, found {len(record)}")
            try:
                rows.append([float(field) for field in record])
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
    data = np.array(rows, dtype=dtype).reshape(len(rows), width or 0)
    header = DnbHeader(_CODE_OF[dtype], data.shape)
    with open(dst, "wb") as fh:
        fh.write(header.pack())
        fh.write(data.astype(dtype.newbyteorder("<"), copy=False).tobytes())
    return data.shape
