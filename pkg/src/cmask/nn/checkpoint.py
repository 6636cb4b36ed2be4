"""Binary checkpoint format.

Layout (little-endian)::

    b"CMSK"  u32 version (=1)
    u32 n    n bytes of UTF-8 "key=value" lines
    u32 tensor count
    per tensor: u16 name length, name, u8 ndim, ndim x u32 dims,
                u8 dtype code (0 = float32), raw data
"""
from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = b"CMSK"
VERSION = 1
DTYPES = {0: np.dtype("<f4")}
DTYPE_CODES = {v: k for k, v in DTYPES.items()}


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    config: dict[str, str] = field(default_factory=dict)
    step: int = 0


def encode_config(config: dict[str, str]) -> bytes:
    lines = []
    for key, value in config.items():
        value = str(value)
        if "=" in key or "\n" in key or "\n" in value:
            raise FormatError(f"config entry {key!r} cannot be encoded")
        lines.append(f"{key}={value}\n")
    return "".join(lines).encode("utf-8")


def decode_config(blob: bytes) -> dict[str, str]:
    try:
        text = blob.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError("config block is not valid UTF-8") from exc
    out = {}
    for line in text.splitlines():
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"malformed config line {line!r}")
        out[key] = value
    return out


def dumps(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    config = dict(ckpt.config)
    config["step"] = str(ckpt.step)
    blob = encode_config(config)
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(ckpt.tensors)))
    for name, arr in ckpt.tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        raw_name = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw_name)))
        buf.write(raw_name)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(struct.pack("<B", DTYPE_CODES[arr.dtype]))
        buf.write(arr.tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("checkpoint is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(data: bytes) -> Checkpoint:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version} (expected {VERSION})")
    (n,) = r.unpack("<I")
    config = decode_config(r.take(n))
    (count,) = r.unpack("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        try:
            name = r.take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("tensor name is not valid UTF-8") from exc
        if name in tensors:
            raise FormatError(f"duplicate tensor name {name!r}")
        (ndim,) = r.unpack("<B")
        dims = r.unpack(f"<{ndim}I")
        (code,) = r.unpack("<B")
        if code not in DTYPES:
            raise FormatError(f"unknown dtype code {code}")
        dtype = DTYPES[code]
        size = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        tensors[name] = np.frombuffer(r.take(size), dtype=dtype).reshape(dims).copy()
    if r.pos != len(data):
        raise FormatError("trailing bytes after last tensor")
    step = config.pop("step", "0")
    try:
        step = int(step)
    except ValueError as exc:
        raise FormatError(f"bad step counter {step!r}") from exc
    return Checkpoint(tensors, config, step)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(ckpt))
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads(data)
