"""Versioned parameter checkpoints.

Layout: the magic line ``PRIVNET-CKPT-1``, one JSON header line listing each
parameter's name, shape and byte offset plus free-form metadata, then the
concatenated little-endian float64 payload in row-major order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = b"PRIVNET-CKPT-1"


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps({"params": entries, "meta": meta or {}, "nbytes": offset},
                        sort_keys=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC + b"\n")
        fh.write(header.encode("utf-8") + b"\n")
        for c in chunks:
            fh.write(c)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Return ``(arrays, meta)``; raises :class:`FormatError` on any corruption."""
    raw = Path(path).read_bytes()
    magic, _, rest = raw.partition(b"\n")
    if magic != MAGIC:
        raise FormatError(f"{path}: not a checkpoint (expected header {MAGIC.decode()})")
    header_line, _, payload = rest.partition(b"\n")
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt checkpoint header ({exc})") from None
    if len(payload) != header.get("nbytes"):
        raise FormatError(f"{path}: payload is {len(payload)} bytes, header says {header.get('nbytes')}")
    arrays = {}
    for entry in header["params"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        start = entry["offset"]
        chunk = payload[start:start + 8 * count]
        arrays[entry["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(entry["shape"]).copy()
    return arrays, header.get("meta", {})
