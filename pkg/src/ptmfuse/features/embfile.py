"""Binary container for per-record feature matrices.

Layout (all integers little-endian u32 unless noted)::

    0   magic  b"UPTM"
    4   version (1)
    8   dtype code (1 = f32, 2 = f64)
    12  rows   total stored rows over all records
    16  cols
    20  payload rows * cols values, row-major
    ..  n_records, then per record: id length (u16), utf-8 id,
        first row, row count

Records are row ranges of the shared payload matrix, so every record in a
file has the same column count.
"""

from __future__ import annotations

import os
import struct
import threading
import warnings
from typing import Iterable, Mapping

import numpy as np

from ..errors import FormatError, InputError

MAGIC = b"UPTM"
VERSION = 1
HEADER = struct.Struct("<4sIIII")
DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
DTYPE_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}


def write_embedding_file(path: str | os.PathLike, records: Mapping[str, np.ndarray] | Iterable,
                         dtype="<f4") -> None:
    """Write ``{id: [rows, cols]}`` matrices; insertion order is preserved."""
    items = list(records.items()) if isinstance(records, Mapping) else list(records)
    dtype = np.dtype(dtype)
    if dtype not in DTYPE_CODES:
        raise FormatError(f"unsupported dtype {dtype}")
    seen = set()
    cols = None
    blocks, index = [], []
    start = 0
    for rid, mat in items:
        if rid in seen:
            raise FormatError(f"duplicate record id {rid!r}")
        seen.add(rid)
        mat = np.asarray(mat)
        if mat.ndim == 1:
            mat = mat[:, None]
        if mat.ndim != 2:
            raise FormatError(f"record {rid!r} must be a matrix, got shape {mat.shape}")
        if cols is None:
            cols = mat.shape[1]
        elif mat.shape[1] != cols:
            raise FormatError(f"record {rid!r} has {mat.shape[1]} cols, file has {cols}")
        blocks.append(np.ascontiguousarray(mat, dtype=dtype))
        index.append((rid, start, mat.shape[0]))
        start += mat.shape[0]
    cols = cols or 0

    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, DTYPE_CODES[dtype], start, cols))
        for b in blocks:
            fh.write(b.tobytes())
        fh.write(struct.pack("<I", len(index)))
        for rid, first, count in index:
            raw = rid.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<II", first, count))


class EmbeddingFile:
    """Read-only view of a container file, fully loaded at open."""

    def __init__(self, path: str | os.PathLike):
        self.path = os.fspath(path)
        self._lock = threading.Lock()
        with self._lock, open(self.path, "rb") as fh:
            buf = fh.read()
        self._parse(buf)

    def _parse(self, buf: bytes) -> None:
        if len(buf) < HEADER.size:
            raise FormatError(f"{self.path}: header needs {HEADER.size} bytes, file has {len(buf)}")
        magic, version, code, rows, cols = HEADER.unpack_from(buf, 0)
        if magic != MAGIC:
            raise FormatError(f"{self.path}: bad magic {magic!r} at byte offset 0 (expected {MAGIC!r})")
        if version != VERSION:
            raise FormatError(f"{self.path}: unsupported version {version} at byte offset 4")
        if code not in DTYPES:
            raise FormatError(f"{self.path}: unknown dtype code {code} at byte offset 8")
        dtype = DTYPES[code]
        need = rows * cols * dtype.itemsize
        end = HEADER.size + need
        if len(buf) < end:
            raise FormatError(
                f"{self.path}: truncated payload at byte offset {HEADER.size}: "
                f"expected {need} bytes, found {max(len(buf) - HEADER.size, 0)}"
            )
        self.rows, self.cols, self.dtype = rows, cols, dtype
        self._payload = np.frombuffer(buf, dtype=dtype, count=rows * cols, offset=HEADER.size).reshape(rows, cols)

        pos = end
        self._index: dict[str, tuple[int, int]] = {}
        try:
            (n,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            for _ in range(n):
                (ln,) = struct.unpack_from("<H", buf, pos)
                pos += 2
                if pos + ln > len(buf):
                    raise struct.error("id runs past end of file")
                rid = buf[pos : pos + ln].decode("utf-8")
                pos += ln
                first, count = struct.unpack_from("<II", buf, pos)
                pos += 8
                if rid in self._index:
                    raise FormatError(f"{self.path}: duplicate id {rid!r} at byte offset {pos - 8 - ln}")
                if first + count > rows:
                    raise FormatError(f"{self.path}: record {rid!r} rows exceed payload at byte offset {pos - 8}")
                self._index[rid] = (first, count)
        except struct.error as exc:
            raise FormatError(f"{self.path}: truncated index at byte offset {pos}: {exc}") from None

    @property
    def ids(self) -> list[str]:
        return list(self._index)

    def __contains__(self, rid: str) -> bool:
        return rid in self._index

    def __len__(self) -> int:
        return len(self._index)

    def get(self, rid: str) -> np.ndarray:
        first, count = self._index[rid]
        return self._payload[first : first + count]

    def items(self):
        for rid in self._index:
            yield rid, self.get(rid)


def load_embedding(file: EmbeddingFile | str | os.PathLike, rid: str, expected_cols: int,
                   missing: str = "error", rows: int | None = None) -> np.ndarray:
    """Fetch one record as a float64 ``[rows, expected_cols]`` matrix.

    With ``missing="zeros"`` an absent id yields zeros (``rows`` required)
    and a warning instead of an error.
    """
    ef = file if isinstance(file, EmbeddingFile) else EmbeddingFile(file)
    if ef.cols != expected_cols:
        raise FormatError(f"{ef.path}: column mismatch at byte offset 16: file has {ef.cols}, expected {expected_cols}")
    if rid not in ef:
        if missing == "zeros":
            if rows is None:
                raise InputError(f"record {rid!r} missing and no row count given for zero fill")
            warnings.warn(f"{ef.path}: record {rid!r} missing, using zeros", stacklevel=2)
            return np.zeros((rows, expected_cols))
        raise InputError(f"{ef.path}: record {rid!r} not found")
    return np.array(ef.get(rid), dtype=np.float64)
