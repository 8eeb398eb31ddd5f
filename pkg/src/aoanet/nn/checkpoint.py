"""Versioned binary checkpoints.

Layout (little-endian)::

    b"AOAN" | u16 version | u32 descriptor length | descriptor (UTF-8 JSON)
    | float32 blobs: parameters, batchnorm buffers, scaler mean, scaler std

The descriptor holds the model spec and the name/shape of every blob, in
write order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..covariance import FeatureScaler
from ..errors import DataError
from .model import HybridNet, ModelSpec

MAGIC = b"AOAN"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")


def save_checkpoint(path, model: HybridNet, scaler: FeatureScaler | None = None, extra: dict | None = None):
    if scaler is None:
        scaler = FeatureScaler.identity(int(np.prod(model.spec.input_shape)))
    blobs = [(n, v) for n, v in model.parameters()] + [(n, v) for n, v in model.buffers()]
    blobs += [("scaler.mean", scaler.mean), ("scaler.std", scaler.std)]
    desc = {"spec": model.spec.to_dict(), "blobs": [[n, list(v.shape)] for n, v in blobs], "extra": extra or {}}
    raw = json.dumps(desc, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(raw)))
        fh.write(raw)
        for _, v in blobs:
            fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


def load_checkpoint(path, dtype=np.float32):
    """Return ``(model, scaler, extra)``."""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e
    if len(data) < _PREFIX.size:
        raise DataError(f"{path}: truncated checkpoint")
    magic, version, n = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    try:
        desc = json.loads(data[_PREFIX.size:_PREFIX.size + n])
    except ValueError as e:
        raise DataError(f"{path}: corrupt descriptor") from e
    model = HybridNet(ModelSpec.from_dict(desc["spec"]), seed=0, dtype=dtype)
    params = dict(model.parameters())
    buffers = dict(model.buffers())
    offset = _PREFIX.size + n
    arrays = {}
    for name, shape in desc["blobs"]:
        count = int(np.prod(shape))
        if offset + 4 * count > len(data):
            raise DataError(f"{path}: truncated payload at {name}")
        arrays[name] = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape)
        offset += 4 * count
    if offset != len(data):
        raise DataError(f"{path}: trailing bytes after payload")
    for name, target in params.items():
        if name not in arrays or arrays[name].shape != target.shape:
            raise DataError(f"{path}: parameter {name} missing or mis-shaped")
        target[...] = arrays[name]
    for name in buffers:
        model.set_buffer(name, arrays[name].copy())
    scaler = FeatureScaler(arrays["scaler.mean"].astype(float), arrays["scaler.std"].astype(float))
    return model, scaler, desc.get("extra", {})
