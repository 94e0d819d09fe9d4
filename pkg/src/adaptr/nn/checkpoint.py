"""Versioned binary container for named float64 arrays.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON header
(names, shapes, offsets, free-form metadata), then the raw little-endian
float64 payload. Output is a pure function of the inputs, so saving the
same parameters twice yields identical bytes.
"""
from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"ADPTCKP1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_arrays(path, arrays, meta=None):
    entries, chunks, offset = [], [], 0
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps({"version": VERSION, "arrays": entries, "meta": meta or {}},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for chunk in chunks:
            fh.write(chunk)


def load_arrays(path):
    """Return ``(arrays, meta)``."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: not an adaptr checkpoint")
    (hlen,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16:16 + hlen].decode("utf-8"))
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    base = 16 + hlen
    arrays = {}
    for e in header["arrays"]:
        n = int(np.prod(e["shape"])) if e["shape"] else 1
        start = base + e["offset"]
        arrays[e["name"]] = np.frombuffer(blob, dtype="<f8", count=n, offset=start) \
            .reshape(tuple(e["shape"])).astype(np.float64)
    return arrays, header["meta"]
