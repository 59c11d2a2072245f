"""Versioned binary checkpoint: schedule, net shapes, parameter tensors.

Layout (all little-endian):

    magic "EMFUSCKP" | u32 format version | 32-byte sha256 of payload |
    payload:
        u64 json length | json (net config + run metadata) |
        u32 T | alpha f64[T] | alpha_bar f64[T] | sigma f64[T] |
        u32 n_params | per tensor: u16 name len, name utf-8,
                        u8 ndim, u32 dims..., f64 data

Writes go through a temp file and an atomic rename.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Tensor
from .denoiser import NetConfig
from .diffusion import NoiseSchedule
from .errors import InvalidInputError

__all__ = ["Checkpoint", "write_checkpoint", "read_checkpoint"]

MAGIC = b"EMFUSCKP"
VERSION = 1


@dataclass(frozen=True)
class Checkpoint:
    net_config: NetConfig
    schedule: NoiseSchedule
    params: dict[str, np.ndarray]
    extra: dict


def _tensor_bytes(name: str, data: np.ndarray) -> bytes:
    encoded = name.encode("utf-8")
    head = struct.pack("<H", len(encoded)) + encoded + struct.pack("<B", data.ndim)
    head += struct.pack(f"<{data.ndim}I", *data.shape)
    return head + np.ascontiguousarray(data, dtype="<f8").tobytes()


def write_checkpoint(path, net_config: NetConfig, schedule: NoiseSchedule, params, extra: dict | None = None) -> None:
    blob = json.dumps({"net": asdict(net_config), "extra": extra or {}}, sort_keys=True).encode("utf-8")
    parts = [struct.pack("<Q", len(blob)), blob, struct.pack("<I", schedule.steps)]
    for arr in (schedule.alpha, schedule.alpha_bar, schedule.sigma):
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    names = list(params)
    parts.append(struct.pack("<I", len(names)))
    for name in names:
        value = params[name]
        data = value.data if isinstance(value, Tensor) else np.asarray(value, dtype=np.float64)
        parts.append(_tensor_bytes(name, data))
    payload = b"".join(parts)
    header = MAGIC + struct.pack("<I", VERSION) + hashlib.sha256(payload).digest()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise InvalidInputError("checkpoint truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 4 + 32 or raw[: len(MAGIC)] != MAGIC:
        raise InvalidInputError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack("<I", raw[len(MAGIC) : len(MAGIC) + 4])
    if version != VERSION:
        raise InvalidInputError(f"{path}: unsupported checkpoint version {version}")
    digest = raw[len(MAGIC) + 4 : len(MAGIC) + 36]
    payload = raw[len(MAGIC) + 36 :]
    if hashlib.sha256(payload).digest() != digest:
        raise InvalidInputError(f"{path}: checkpoint content hash mismatch")
    r = _Reader(payload)
    (json_len,) = r.unpack("<Q")
    meta = json.loads(r.take(json_len).decode("utf-8"))
    (steps,) = r.unpack("<I")

    def f64(count: int) -> np.ndarray:
        return np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64)

    schedule = NoiseSchedule(f64(steps), f64(steps), f64(steps))
    (n_params,) = r.unpack("<I")
    params: dict[str, np.ndarray] = {}
    for _ in range(n_params):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        dims = r.unpack(f"<{ndim}I") if ndim else ()
        size = int(np.prod(dims)) if dims else 1
        params[name] = f64(size).reshape(dims)
    return Checkpoint(NetConfig(**meta["net"]), schedule, params, meta["extra"])
