"""Self-describing, checksummed weight files.

Layout (little-endian)::

    magic "NSRPWGT\\n" | u32 version | u32 config_len | config JSON
    | u32 n_tensors | per tensor: u16 name_len, name, u8 dtype, u8 ndim,
      u32 * ndim shape, raw data
    | sha256 of everything above
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .model import ModelConfig, ModelWeights

MAGIC = b"NSRPWGT\n"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class WeightFileError(ValueError):
    pass


def dumps(weights: ModelWeights) -> bytes:
    config = json.dumps(weights.config.to_dict(), sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(config)), config, struct.pack("<I", len(weights.params))]
    for name, arr in weights.params.items():
        raw_name = name.encode()
        parts.append(struct.pack("<H", len(raw_name)) + raw_name)
        parts.append(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[_CODES[arr.dtype]]).tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def loads(blob: bytes, expected: ModelConfig | None = None) -> ModelWeights:
    if len(blob) < len(MAGIC) + 32 or not blob.startswith(MAGIC):
        raise WeightFileError("not a weight file (bad magic)")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise WeightFileError("weight file checksum mismatch (corrupt file)")
    pos = len(MAGIC)
    version, config_len = struct.unpack_from("<II", body, pos)
    pos += 8
    if version != VERSION:
        raise WeightFileError(f"unsupported weight file version {version} (expected {VERSION})")
    config = ModelConfig(**json.loads(body[pos:pos + config_len]))
    pos += config_len
    if expected is not None and expected != config:
        raise WeightFileError(f"weight file config {config} does not match expected {expected}")
    (count,) = struct.unpack_from("<I", body, pos)
    pos += 4
    params = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", body, pos)
        pos += 2
        name = body[pos:pos + name_len].decode()
        pos += name_len
        code, ndim = struct.unpack_from("<BB", body, pos)
        pos += 2
        shape = struct.unpack_from(f"<{ndim}I", body, pos)
        pos += 4 * ndim
        dtype = _DTYPES[code]
        nbytes = int(np.prod(shape)) * dtype.itemsize
        params[name] = np.frombuffer(body, dtype, count=int(np.prod(shape)), offset=pos).reshape(shape).astype(dtype.newbyteorder("="))
        pos += nbytes
    if pos != len(body):
        raise WeightFileError("trailing bytes in weight file")
    try:
        return ModelWeights(config, params)
    except ValueError as exc:
        raise WeightFileError(f"shape mismatch: {exc}") from exc


def save_weights(weights: ModelWeights, path) -> None:
    Path(path).write_bytes(dumps(weights))


def load_weights(path, expected: ModelConfig | None = None) -> ModelWeights:
    return loads(Path(path).read_bytes(), expected)
