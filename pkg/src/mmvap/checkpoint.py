"""Self-describing checkpoint container.

Layout (little-endian)::

    b"MMVAPCKP" | u32 version | u32 len | config JSON (utf-8)
    u32 n_tensors, then per tensor:
        u16 len | name (utf-8) | u8 ndim | u32 * ndim shape | f32 * prod(shape)

Tensors are written sorted by name so the bytes depend only on the contents.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointMismatch
from .model import MMVap, ModelConfig

MAGIC = b"MMVAPCKP"
VERSION = 1


def encode_checkpoint(config: dict, tensors: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    parts += [struct.pack("<I", len(blob)), blob, struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        raw_name = name.encode()
        parts += [struct.pack("<H", len(raw_name)), raw_name,
                  struct.pack("<B", arr.ndim), struct.pack(f"<{arr.ndim}I", *arr.shape),
                  arr.tobytes()]
    return b"".join(parts)


def decode_checkpoint(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if data[:8] != MAGIC:
        raise CheckpointMismatch("not an MM-VAP checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", data, 8)
    if version != VERSION:
        raise CheckpointMismatch(f"unsupported checkpoint version {version}")
    pos = 12
    (n,) = struct.unpack_from("<I", data, pos)
    pos += 4
    config = json.loads(data[pos:pos + n])
    pos += n
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    tensors = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + n].decode()
        pos += n
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        size = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(shape).copy()
        pos += 4 * size
    if pos != len(data):
        raise CheckpointMismatch("trailing bytes after last tensor")
    return config, tensors


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def save_checkpoint(path, model: MMVap, meta: dict | None = None) -> None:
    config = {"model": model.cfg.to_dict(), "meta": meta or {}}
    tensors = {k: v.detach().cpu().float().numpy() for k, v in model.state_dict().items()}
    atomic_write_bytes(path, encode_checkpoint(config, tensors))


def load_checkpoint(path) -> tuple[MMVap, dict]:
    config, tensors = decode_checkpoint(Path(path).read_bytes())
    model = MMVap(ModelConfig(**config["model"]))
    state = model.state_dict()
    if set(state) != set(tensors):
        missing, extra = set(state) - set(tensors), set(tensors) - set(state)
        raise CheckpointMismatch(f"parameter names differ: missing {sorted(missing)}, "
                                 f"unexpected {sorted(extra)}")
    for k, arr in tensors.items():
        if tuple(state[k].shape) != arr.shape:
            raise CheckpointMismatch(f"{k}: shape {arr.shape} vs model {tuple(state[k].shape)}")
    model.load_state_dict({k: torch.from_numpy(v) for k, v in tensors.items()})
    return model, config.get("meta", {})
