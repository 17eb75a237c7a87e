"""Parameter checkpoint container: JSON header + little-endian float64 payload.

Layout: 8-byte little-endian header length, the UTF-8 JSON header, then the
raw array bytes.  The header lists name, shape and byte offset (relative to
the payload start) for every array, in a fixed order, so files created from
the same values are byte-identical.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .tensor import Tensor

__all__ = ["save_arrays", "load_arrays", "save_params", "load_params"]

_MAGIC_KEY = "lsdn-checkpoint"
_VERSION = 1


def save_arrays(path, arrays: dict[str, np.ndarray]):
    """Write named float64 arrays; insertion order is preserved."""
    entries = []
    offset = 0
    blobs = []
    for name, arr in arrays.items():
        a = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        blobs.append(a.tobytes())
        offset += a.nbytes
    header = json.dumps(
        {"format": _MAGIC_KEY, "version": _VERSION, "dtype": "<f8", "arrays": entries},
        separators=(",", ":"), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_arrays(path) -> dict[str, np.ndarray]:
    path = Path(path)
    with open(path, "rb") as fh:
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("format") != _MAGIC_KEY:
            raise ValueError(f"{path}: not a parameter checkpoint")
        payload = fh.read()
    out = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=n, offset=start)
        out[entry["name"]] = arr.reshape(shape).astype(np.float64)
    return out


def save_params(path, params: dict[str, Tensor]):
    save_arrays(path, {name: p.data for name, p in params.items()})


def load_params(path, params: dict[str, Tensor]):
    """Load values into an existing parameter dict (shapes must match)."""
    arrays = load_arrays(path)
    missing = set(params) - set(arrays)
    if missing:
        raise ValueError(f"checkpoint is missing parameters: {sorted(missing)}")
    for name, p in params.items():
        a = arrays[name]
        if a.shape != p.data.shape:
            raise ValueError(
                f"shape mismatch for '{name}': file {a.shape}, model {p.data.shape}")
        p.data[...] = a
