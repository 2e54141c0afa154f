"""Versioned binary checkpoints: magic, schema version, JSON header, named float64 blobs.

Layout::

    b"RSCK" | u32 version | u64 header length | header JSON (utf-8) | blobs

The header holds free-form ``meta`` plus ``blobs``: a list of
``{name, shape, offset}`` with offsets relative to the start of the blob area.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import FormatError

MAGIC = b"RSCK"
VERSION = 1


def save_checkpoint(path, blobs, meta=None):
    layout, offset = [], 0
    arrays = []
    for name in sorted(blobs):
        arr = np.asarray(blobs[name], dtype="<f8", order="C")
        layout.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.nbytes
        arrays.append(arr)
    header = json.dumps({"meta": meta or {}, "blobs": layout}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        for arr in arrays:
            fh.write(arr.tobytes())


def load_checkpoint(path):
    """Returns (blobs dict, meta dict)."""
    raw = open(path, "rb").read()
    if raw[:4] != MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}", path=path, offset=0)
    if len(raw) < 16:
        raise FormatError("header truncated", path=path, offset=len(raw))
    version, n = struct.unpack_from("<IQ", raw, 4)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", path=path, offset=4)
    try:
        header = json.loads(raw[16:16 + n].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt header: {exc}", path=path, offset=16) from exc
    base = 16 + n
    blobs = {}
    for item in header["blobs"]:
        count = int(np.prod(item["shape"], dtype=np.int64))
        start = base + item["offset"]
        if start + 8 * count > len(raw):
            raise FormatError(f"blob {item['name']} truncated", path=path, offset=len(raw))
        blobs[item["name"]] = np.frombuffer(raw, "<f8", count, start).reshape(tuple(item["shape"])).astype(np.float64)
    return blobs, header["meta"]
