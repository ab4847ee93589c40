"""Bit-exact binary checkpoint format.

Layout (all integers little-endian)::

    b"ISCK"                     magic
    u32 version                 currently 1
    u32 n, n bytes              config as canonical JSON (sorted keys, no spaces)
    u32 count                   number of tensors, sorted by name
    per tensor:
        u16 n, n bytes          UTF-8 name
        u8 rank
        u32 * rank              dims
        f32 * prod(dims)        row-major data
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from molvit.errors import CheckpointError
from molvit.model import Model, ModelConfig
from molvit.tensor import Tensor

MAGIC = b"ISCK"
VERSION = 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


@dataclass
class Checkpoint:
    config: dict
    tensors: dict[str, np.ndarray]

    def to_bytes(self) -> bytes:
        out = bytearray(MAGIC)
        out += struct.pack("<I", VERSION)
        cfg = canonical_json(self.config).encode("utf-8")
        out += struct.pack("<I", len(cfg)) + cfg
        out += struct.pack("<I", len(self.tensors))
        for name in sorted(self.tensors):
            arr = np.asarray(self.tensors[name], dtype="<f4", order="C")
            raw = name.encode("utf-8")
            out += struct.pack("<H", len(raw)) + raw
            out += struct.pack("<B", arr.ndim)
            out += struct.pack(f"<{arr.ndim}I", *arr.shape)
            out += arr.tobytes()
        return bytes(out)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Checkpoint":
        view = memoryview(buf)
        pos = 0

        def take(n: int) -> memoryview:
            nonlocal pos
            if pos + n > len(view):
                raise CheckpointError("checkpoint is truncated")
            chunk = view[pos : pos + n]
            pos += n
            return chunk

        def unpack(fmt: str):
            return struct.unpack(fmt, take(struct.calcsize(fmt)))

        if bytes(take(4)) != MAGIC:
            raise CheckpointError("not a checkpoint file (bad magic)")
        (version,) = unpack("<I")
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (n,) = unpack("<I")
        config = json.loads(bytes(take(n)).decode("utf-8"))
        (count,) = unpack("<I")
        tensors = {}
        for _ in range(count):
            (n,) = unpack("<H")
            name = bytes(take(n)).decode("utf-8")
            (rank,) = unpack("<B")
            dims = unpack(f"<{rank}I")
            size = int(np.prod(dims, dtype=np.int64))
            arr = np.frombuffer(take(4 * size), dtype="<f4").reshape(dims).astype(np.float32)
            if name in tensors:
                raise CheckpointError(f"duplicate tensor name {name!r}")
            tensors[name] = arr
        if pos != len(view):
            raise CheckpointError("trailing bytes after tensor table")
        return cls(config, tensors)


def save_checkpoint(path, model: Model, extra: dict | None = None) -> None:
    config = {"model": model.config.to_dict()}
    if extra:
        config.update(extra)
    ckpt = Checkpoint(config, {k: v.data for k, v in model.weights.items()})
    Path(path).write_bytes(ckpt.to_bytes())


def load_checkpoint(path) -> Model:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    ckpt = Checkpoint.from_bytes(path.read_bytes())
    try:
        config = ModelConfig.from_dict(ckpt.config["model"])
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"checkpoint config is malformed: {exc}") from exc
    weights = {k: Tensor(v, requires_grad=True, name=k) for k, v in ckpt.tensors.items()}
    return Model(config, weights)
