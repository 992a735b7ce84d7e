"""Binary checkpoint format for trained systems.

Layout (all integers little-endian u32, tensor data f32 little-endian):
  magic "E2EC" | version | epoch
  | config_len | config as UTF-8 key=value lines
  | n_vocab | n_vocab x (token_len, token UTF-8)
  | repeated tensor records: name_len, name, rank, dims[rank], data

Loading a file and saving it again is byte-identical.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataValidationError

CHECKPOINT_MAGIC = b"E2EC"
CHECKPOINT_VERSION = 1


@dataclass
class CheckpointData:
    tensors: dict[str, np.ndarray]
    config: dict[str, str]
    vocab_tokens: list[str]
    epoch: int


def save_checkpoint(path, tensors: dict[str, np.ndarray], config: dict[str, str],
                    vocab_tokens: list[str], epoch: int) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    config_blob = "".join("%s=%s\n" % (k, v) for k, v in sorted(config.items())).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, epoch))
        fh.write(struct.pack("<I", len(config_blob)))
        fh.write(config_blob)
        fh.write(struct.pack("<I", len(vocab_tokens)))
        for tok in vocab_tokens:
            raw = tok.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype="<f4")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack("<%dI" % arr.ndim, *arr.shape))
            fh.write(arr.tobytes())


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw = raw
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise DataValidationError("checkpoint %s truncated" % self.path)
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def done(self) -> bool:
        return self.pos >= len(self.raw)


def load_checkpoint(path) -> CheckpointData:
    path = Path(path)
    if not path.exists():
        raise DataValidationError("checkpoint not found: %s" % path)
    r = _Reader(path.read_bytes(), path)
    if r.take(4) != CHECKPOINT_MAGIC:
        raise DataValidationError("not a checkpoint file: %s" % path)
    version = r.u32()
    if version != CHECKPOINT_VERSION:
        raise DataValidationError("unsupported checkpoint version %d" % version)
    epoch = r.u32()
    config_blob = r.take(r.u32()).decode("utf-8")
    config = {}
    for line in config_blob.splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            config[key] = value
    vocab_tokens = [r.take(r.u32()).decode("utf-8") for _ in range(r.u32())]
    tensors: dict[str, np.ndarray] = {}
    while not r.done():
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        dims = struct.unpack("<%dI" % rank, r.take(4 * rank))
        n = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(dims)
        if name in tensors:
            raise DataValidationError("duplicate tensor %r in %s" % (name, path))
        tensors[name] = np.array(data)
    return CheckpointData(tensors, config, vocab_tokens, epoch)
