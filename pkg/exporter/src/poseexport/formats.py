"""Writers for the engine's on-disk formats.

The exporter touches the engine only through its file formats, so the
two writers are implemented here against the format contract rather
than imported from the engine package:

* tensor files: ``PIT1`` magic, little-endian uint32 rank then dims,
  float32 payload in C order, nothing after the payload;
* instance records: one JSON object per line with ``id``, ``class``,
  and tensor paths relative to the records file, keys sorted.

The engine's loaders are the authority on validity; the exporter test
suite round-trips every artifact through them.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PIT1"
MAX_RANK = 32
MAX_ELEMENTS = 1 << 31


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    data = np.ascontiguousarray(array, dtype=np.float32)
    if data.ndim > MAX_RANK:
        raise ValueError(f"tensor rank {data.ndim} exceeds format maximum {MAX_RANK}")
    if data.size > MAX_ELEMENTS:
        raise ValueError(f"tensor has {data.size} elements, format maximum {MAX_ELEMENTS}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", data.ndim))
        for dim in data.shape:
            fh.write(struct.pack("<I", dim))
        fh.write(data.tobytes(order="C"))


def record_line(instance_id: str, category: str, features: str, distribution: str) -> str:
    """One records.jsonl line (no trailing newline)."""
    return json.dumps(
        {
            "id": instance_id,
            "class": category,
            "features": features,
            "distribution": distribution,
            "source": "export",
        },
        sort_keys=True,
    )


def error_line(image_path: str, message: str) -> str:
    """One errors.jsonl sidecar line (no trailing newline)."""
    return json.dumps({"error": message, "image": image_path}, sort_keys=True)
