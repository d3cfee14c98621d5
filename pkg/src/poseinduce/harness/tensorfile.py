"""Binary tensor interchange format.

Layout: 4-byte ASCII magic "PIT1", unsigned 32-bit little-endian rank,
rank unsigned 32-bit little-endian dims, then the payload as row-major
IEEE-754 32-bit little-endian floats. The payload must be exactly
4 * prod(dims) bytes; anything shorter or longer is rejected.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PIT1"
MAX_RANK = 32
MAX_ELEMENTS = 1 << 31


class TensorFileError(ValueError):
    """Base class for malformed tensor files."""


class BadMagicError(TensorFileError):
    """Leading bytes are not the expected magic."""


class TruncatedFileError(TensorFileError):
    """File ends before the header or payload is complete."""


class DimensionOverflowError(TensorFileError):
    """Rank or element count exceeds sane bounds."""


class TrailingDataError(TensorFileError):
    """Extra bytes follow the payload."""


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    """Serialize an array as float32. Values are cast; callers needing
    bit-exact round trips should pass float32 data."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim > MAX_RANK:
        raise DimensionOverflowError(f"rank {arr.ndim} exceeds limit {MAX_RANK}")
    if arr.size > MAX_ELEMENTS:
        raise DimensionOverflowError(f"{arr.size} elements exceed limit {MAX_ELEMENTS}")
    header = MAGIC + struct.pack("<I", arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes(order="C"))


def read_tensor(path: str | Path) -> np.ndarray:
    """Deserialize a tensor file, verifying every structural invariant."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise TruncatedFileError("file shorter than the magic")
    if blob[:4] != MAGIC:
        raise BadMagicError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    if len(blob) < 8:
        raise TruncatedFileError("file ends inside the rank field")
    (rank,) = struct.unpack_from("<I", blob, 4)
    if rank > MAX_RANK:
        raise DimensionOverflowError(f"rank {rank} exceeds limit {MAX_RANK}")
    dims_end = 8 + 4 * rank
    if len(blob) < dims_end:
        raise TruncatedFileError("file ends inside the dims list")
    dims = struct.unpack_from(f"<{rank}I", blob, 8)
    count = 1
    for d in dims:
        count *= int(d)
        if count > MAX_ELEMENTS:
            raise DimensionOverflowError(
                f"dims {dims} imply more than {MAX_ELEMENTS} elements"
            )
    payload = blob[dims_end:]
    expected = 4 * count
    if len(payload) < expected:
        raise TruncatedFileError(
            f"payload is {len(payload)} bytes, expected {expected}"
        )
    if len(payload) > expected:
        raise TrailingDataError(
            f"{len(payload) - expected} trailing bytes after the payload"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    return flat.reshape(dims).copy()
