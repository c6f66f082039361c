"""Self-describing binary container for named float32 tensors plus JSON metadata.

Layout: 4-byte magic, little-endian uint32 header length, UTF-8 JSON header,
then the concatenated row-major little-endian float32 tensor payloads.  The
header carries a format-version integer, arbitrary metadata (hasher config
etc.) and the tensor directory.  Writing is byte-deterministic.
"""
from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"EVCT"
FORMAT_VERSION = 1


class ModelFormatError(Exception):
    pass


def save_tensors(path: str, tensors: dict[str, np.ndarray], meta: dict) -> None:
    entries = []
    payloads = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        raw = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        payloads.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"version": FORMAT_VERSION, "meta": meta, "tensors": entries},
        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for raw in payloads:
            fh.write(raw)


def load_tensors(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ModelFormatError(f"{path}: not a model container")
    (hlen,) = struct.unpack("<I", blob[4:8])
    header = json.loads(blob[8:8 + hlen].decode("utf-8"))
    if header.get("version") != FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: unsupported format version {header.get('version')}")
    base = 8 + hlen
    tensors = {}
    for ent in header["tensors"]:
        start = base + ent["offset"]
        raw = blob[start:start + ent["nbytes"]]
        if len(raw) != ent["nbytes"]:
            raise ModelFormatError(f"{path}: truncated tensor {ent['name']!r}")
        arr = np.frombuffer(raw, dtype="<f4").reshape(ent["shape"]).copy()
        tensors[ent["name"]] = arr
    return tensors, header["meta"]
