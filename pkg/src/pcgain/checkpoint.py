"""Checkpoint files.

Layout (all integers little-endian)::

    8 bytes   magic  b"PCGAINCK"
    4 bytes   uint32 format version (1)
    8 bytes   uint64 header length H
    H bytes   UTF-8 JSON header, keys sorted, no whitespace
    ...       float64 little-endian parameter arrays, row-major, concatenated

The header holds ``{"config": {...}, "meta": {...}, "networks": {name: [layer, ...]}}``
where each layer is ``{"activation": tag, "weight_shape": [out, in],
"bias_shape": [out]}``. Arrays follow in network-name order (sorted), then
layer order, weight before bias. Writing the same networks and config always
produces the same bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .nn import Layer, NetParams

MAGIC = b"PCGAINCK"
VERSION = 1


def dumps(networks: Mapping[str, NetParams], config: Mapping[str, Any] | None = None, meta=None) -> bytes:
    names = sorted(networks)
    header = {
        "config": dict(config or {}),
        "meta": dict(meta or {}),
        "networks": {
            name: [
                {
                    "activation": l.activation,
                    "weight_shape": list(l.weight.shape),
                    "bias_shape": list(l.bias.shape),
                }
                for l in networks[name].layers
            ]
            for name in names
        },
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    chunks = [MAGIC, struct.pack("<IQ", VERSION, len(head)), head]
    for name in names:
        for a in networks[name].arrays():
            chunks.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return b"".join(chunks)


def loads(blob: bytes) -> tuple[dict[str, NetParams], dict[str, Any], dict[str, Any]]:
    if blob[:8] != MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    version, hlen = struct.unpack("<IQ", blob[8:20])
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    header = json.loads(blob[20 : 20 + hlen].decode())
    pos = 20 + hlen
    nets = {}
    for name in sorted(header["networks"]):
        layers = []
        for spec in header["networks"][name]:
            arrays = []
            for shape in (spec["weight_shape"], spec["bias_shape"]):
                n = int(np.prod(shape))
                arrays.append(np.frombuffer(blob, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64))
                pos += 8 * n
            layers.append(Layer(arrays[0], arrays[1], spec["activation"]))
        nets[name] = NetParams(layers)
    if pos != len(blob):
        raise ValueError("trailing bytes after last parameter array")
    return nets, header["config"], header["meta"]


def save(path: str | Path, networks: Mapping[str, NetParams], config=None, meta=None) -> None:
    Path(path).write_bytes(dumps(networks, config, meta))


def load(path: str | Path):
    return loads(Path(path).read_bytes())
