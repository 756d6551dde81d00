"""Checkpoint container: named float64 tensors plus the run configuration and
RNG state needed to reproduce or resume a run.

Layout (little-endian): magic `ACKP`, u32 version, u64 config length + UTF-8
config text, u64 RNG-state length + JSON text, u32 tensor count, then per
tensor: u32 name length, UTF-8 name, u32 ndim, ndim u64 dims, float64 payload.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError
from .model import PARAM_NAMES, ModelParams

MAGIC = b"ACKP"
VERSION = 1


@dataclass
class Checkpoint:
    params: ModelParams
    config_text: str
    rng_state: dict | None
    status: str


def save_checkpoint(path, params: ModelParams, config_text: str,
                    rng_state: dict | None = None, status: str = "ok") -> None:
    header = f"status = {status}\n" + config_text
    rng_text = json.dumps(rng_state, sort_keys=True) if rng_state is not None else ""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", MAGIC, VERSION))
        blob = header.encode("utf-8")
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        blob = rng_text.encode("utf-8")
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(PARAM_NAMES)))
        for name in PARAM_NAMES:
            tensor = np.ascontiguousarray(getattr(params, name), dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", tensor.ndim))
            for dim in tensor.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(tensor.tobytes())


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) != 8:
            raise ParseError(f"{path}: truncated checkpoint")
        magic, version = struct.unpack("<4sI", head)
        if magic != MAGIC:
            raise ParseError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise ParseError(f"{path}: unsupported version {version}")
        (config_len,) = struct.unpack("<Q", fh.read(8))
        header = fh.read(config_len).decode("utf-8")
        (rng_len,) = struct.unpack("<Q", fh.read(8))
        rng_text = fh.read(rng_len).decode("utf-8")
        (count,) = struct.unpack("<I", fh.read(4))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            dims = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
            size = int(np.prod(dims)) if dims else 1
            payload = fh.read(size * 8)
            if len(payload) != size * 8:
                raise ParseError(f"{path}: truncated tensor '{name}'")
            tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).astype(np.float64)
    missing = [n for n in PARAM_NAMES if n not in tensors]
    if missing:
        raise ParseError(f"{path}: checkpoint missing tensors {missing}")
    status_line, _, config_text = header.partition("\n")
    status = status_line.partition("=")[2].strip() if "=" in status_line else "ok"
    rng_state = json.loads(rng_text) if rng_text else None
    return Checkpoint(params=ModelParams(**{n: tensors[n] for n in PARAM_NAMES}),
                      config_text=config_text, rng_state=rng_state, status=status)
