"""Binary matrix file format and CSV export.

Layout: magic ``YMAT`` (4 bytes), then three little-endian u32 fields
(version = 1, rows, cols), then rows*cols float64 little-endian values in
row-major order. The 16-byte header makes an empty matrix a header-only file.
Round-trips are bit-exact for all finite payloads.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import MalformedHeaderError, NonFiniteError, PayloadSizeError

MAGIC = b"YMAT"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


def mat_write(m: np.ndarray, path: str | Path) -> None:
    """Serialize a 2-D float64 matrix; bit-exact round-trip with mat_read."""
    m = np.ascontiguousarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    rows, cols = m.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, rows, cols))
        fh.write(m.astype("<f8", copy=False).tobytes(order="C"))


def mat_read(path: str | Path) -> np.ndarray:
    """Read a matrix file, validating header, payload size, and finiteness."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise MalformedHeaderError(f"{path}: file shorter than the 16-byte header")
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MalformedHeaderError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise MalformedHeaderError(f"{path}: unsupported version {version}")
    payload = data[_HEADER.size:]
    expected = rows * cols * 8
    if len(payload) != expected:
        raise PayloadSizeError(
            f"{path}: header says {rows}x{cols} ({expected} payload bytes), "
            f"found {len(payload)}"
        )
    m = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(rows, cols)
    if not np.isfinite(m).all():
        raise NonFiniteError(f"{path}: payload contains NaN or Inf")
    return m


def write_csv(m: np.ndarray, path: str | Path) -> None:
    """Plain CSV export for plotting: one matrix row per line, ',' separated."""
    m = np.asarray(m, dtype=np.float64)
    with open(path, "w") as fh:
        for row in np.atleast_2d(m):
            fh.write(",".join(format(x, ".17g") for x in row))
            fh.write("\n")
