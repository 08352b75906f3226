"""Binary checkpoint format (little-endian).

    magic  b"GAIT1"
    u32    format version
    u32    tensor count, then per tensor:
           u16 name length, name (utf-8), u8 rank, u32 dims[rank], f32 payload
    u32    scalar count, then per scalar:
           u16 name length, name (utf-8), f64 value
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..data import Gait
from .model import ArchConfig, ModelParams

MAGIC = b"GAIT1"
VERSION = 1
GAIT_CODES = {g: i for i, g in enumerate(Gait)}


class CheckpointError(ValueError):
    pass


def _name(name: str) -> bytes:
    raw = name.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def dumps(params: ModelParams, extra_scalars: dict[str, float] | None = None) -> bytes:
    out = [MAGIC, struct.pack("<I", VERSION)]
    names = sorted(params.tensors)
    out.append(struct.pack("<I", len(names)))
    for name in names:
        arr = np.ascontiguousarray(params.tensors[name], dtype="<f4")
        out.append(_name(name))
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    arch = params.arch
    scalars = {
        "stride_threshold": params.stride_threshold,
        "session_threshold": params.session_threshold,
        "gait": GAIT_CODES[params.gait],
        "arch.pool_width": arch.pool_width,
        "arch.dropout": arch.dropout,
        "arch.bn_momentum": arch.bn_momentum,
    }
    for i, (mu, sd) in enumerate(zip(params.norm_mean, params.norm_std)):
        scalars[f"norm.mean.{i}"] = mu
        scalars[f"norm.std.{i}"] = sd
    scalars.update(extra_scalars or {})
    out.append(struct.pack("<I", len(scalars)))
    for name in sorted(scalars):
        out.append(_name(name))
        out.append(struct.pack("<d", float(scalars[name])))
    return b"".join(out)


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.raw):
            raise CheckpointError("truncated checkpoint")
        values = struct.unpack_from(fmt, self.raw, self.pos)
        self.pos += size
        return values

    def name(self) -> str:
        (n,) = self.take("<H")
        return bytes(self.take(f"<{n}s")[0]).decode("utf-8")


def loads(raw: bytes) -> tuple[ModelParams, dict[str, float]]:
    """Parse a checkpoint; returns the params and any scalars not consumed by them."""
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError("bad checkpoint header")
    r = _Reader(raw)
    r.pos = len(MAGIC)
    (version,) = r.take("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    tensors: dict[str, np.ndarray] = {}
    (n_tensors,) = r.take("<I")
    for _ in range(n_tensors):
        name = r.name()
        (rank,) = r.take("<B")
        dims = r.take(f"<{rank}I")
        count = int(np.prod(dims)) if rank else 1
        payload = r.take(f"<{4 * count}s")[0]
        tensors[name] = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims)
    scalars: dict[str, float] = {}
    (n_scalars,) = r.take("<I")
    for _ in range(n_scalars):
        name = r.name()
        scalars[name] = r.take("<d")[0]
    if r.pos != len(raw):
        raise CheckpointError("trailing bytes after checkpoint records")
    try:
        n_in = tensors["conv1.weight"].shape[1]
        arch = ArchConfig(
            conv1_filters=tensors["conv1.weight"].shape[0],
            conv2_filters=tensors["conv2.weight"].shape[0],
            kernel_size=tensors["conv1.weight"].shape[2],
            pool_width=int(scalars.pop("arch.pool_width")),
            dropout=scalars.pop("arch.dropout"),
            dense_units=tensors["dense1.weight"].shape[0],
            bn_momentum=scalars.pop("arch.bn_momentum"),
            in_channels=n_in,
        )
        params = ModelParams(
            tensors=tensors,
            arch=arch,
            norm_mean=np.array([scalars.pop(f"norm.mean.{i}") for i in range(n_in)]),
            norm_std=np.array([scalars.pop(f"norm.std.{i}") for i in range(n_in)]),
            stride_threshold=scalars.pop("stride_threshold"),
            session_threshold=scalars.pop("session_threshold"),
            gait=list(Gait)[int(scalars.pop("gait"))],
        )
    except (KeyError, IndexError) as exc:
        raise CheckpointError(f"checkpoint missing record {exc}") from None
    return params, scalars


def save(params: ModelParams, path: str | Path, extra_scalars: dict[str, float] | None = None) -> None:
    Path(path).write_bytes(dumps(params, extra_scalars))


def load(path: str | Path) -> tuple[ModelParams, dict[str, float]]:
    return loads(Path(path).read_bytes())
