"""Binary model checkpoints.

Layout (all integers little-endian)::

    offset  size  field
    0       4     magic b"DSN1"
    4       2     format version (uint16, currently 1)
    6       4     length L of the layer table (uint32)
    10      L     layer table, UTF-8 JSON (see below)
    10+L    4*P   parameters as float32, in table order

The layer table is a JSON object with sorted keys and no whitespace::

    {"input_shape": [H, W, C], "layers": [
        {"kind": "conv", "config": {...}, "trainable": true,
         "params": [{"name": "W", "shape": [27, 8]}, {"name": "b", "shape": [8]}]},
        ...]}

Within a layer, parameters appear in sorted name order; each is stored
row-major. P is the total parameter count.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from .layers import layer_from_config
from .network import Network

MAGIC = b"DSN1"
VERSION = 1


class CheckpointError(DataError):
    pass


def to_bytes(net: Network) -> bytes:
    table = {"input_shape": list(net.input_shape), "layers": []}
    blobs = []
    for layer in net.layers:
        entry = {"kind": layer.kind, "config": layer.config(),
                 "trainable": bool(layer.trainable), "params": []}
        for name in sorted(layer.params):
            arr = layer.params[name]
            entry["params"].append({"name": name, "shape": list(arr.shape)})
            blobs.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        table["layers"].append(entry)
    header = json.dumps(table, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<HI", VERSION, len(header)) + header + b"".join(blobs)


def from_bytes(data: bytes, dtype=np.float32) -> Network:
    if data[:4] != MAGIC:
        raise CheckpointError("not a DSN1 checkpoint (bad magic)")
    if len(data) < 10:
        raise CheckpointError("truncated checkpoint header")
    version, n = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        table = json.loads(data[10:10 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt layer table: {exc}") from None
    layers = []
    offset = 10 + n
    pending = []
    for entry in table["layers"]:
        layer = layer_from_config(entry["kind"], entry["config"])
        layer.trainable = entry["trainable"]
        for p in entry["params"]:
            shape = tuple(p["shape"])
            size = int(np.prod(shape))
            end = offset + 4 * size
            if end > len(data):
                raise CheckpointError("truncated parameter blob")
            arr = np.frombuffer(data, dtype="<f4", count=size, offset=offset).reshape(shape)
            pending.append((layer, p["name"], arr))
            offset = end
        layers.append(layer)
    if offset != len(data):
        raise CheckpointError(f"{len(data) - offset} trailing bytes after parameters")
    for layer, name, arr in pending:
        layer.params[name] = arr.astype(dtype)
    return Network(layers, table["input_shape"], dtype=dtype)


def save(net: Network, path) -> Path:
    """Write atomically (temporary file, then rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(to_bytes(net))
    os.replace(tmp, path)
    return path


def load(path, dtype=np.float32) -> Network:
    return from_bytes(Path(path).read_bytes(), dtype=dtype)
