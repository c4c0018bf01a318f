"""Versioned binary parameter container.

Layout::

    b"SHOPCKPT"                 magic, 8 bytes
    uint32 LE                   format version
    uint64 LE                   header length H
    H bytes UTF-8 JSON          {"kind", "config", "meta", "params": [{name, shape, offset, count}]}
    float64 LE values           row-major, concatenated in header order
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError
from .module import params_checksum

MAGIC = b"SHOPCKPT"
VERSION = 1


@dataclass
class ModelCheckpoint:
    kind: str
    config: dict
    params: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def checksum(self, prefix: str = "") -> str:
        return params_checksum({k: v for k, v in self.params.items() if k.startswith(prefix)})


def dumps(ckpt: ModelCheckpoint) -> bytes:
    entries, chunks, offset = [], [], 0
    for name in sorted(ckpt.params):
        arr = np.asarray(ckpt.params[name], dtype="<f8", order="C")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": arr.size})
        chunks.append(arr.tobytes())
        offset += arr.size
    header = json.dumps(
        {"kind": ckpt.kind, "config": ckpt.config, "meta": ckpt.meta, "params": entries},
        sort_keys=True,
    ).encode("utf-8")
    return MAGIC + struct.pack("<IQ", VERSION, len(header)) + header + b"".join(chunks)


def loads(blob: bytes) -> ModelCheckpoint:
    if blob[:8] != MAGIC:
        raise DataError("not a checkpoint (bad magic)")
    version, hlen = struct.unpack("<IQ", blob[8:20])
    if version != VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    header = json.loads(blob[20:20 + hlen].decode("utf-8"))
    body = np.frombuffer(blob, dtype="<f8", offset=20 + hlen)
    params = {}
    for e in header["params"]:
        vals = body[e["offset"]:e["offset"] + e["count"]]
        if vals.size != e["count"]:
            raise DataError(f"truncated checkpoint at parameter {e['name']}")
        params[e["name"]] = vals.astype(np.float64).reshape(e["shape"])
    return ModelCheckpoint(header["kind"], header["config"], params, header["meta"])


def save(ckpt: ModelCheckpoint, path) -> None:
    Path(path).write_bytes(dumps(ckpt))


def load(path) -> ModelCheckpoint:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads(blob)
