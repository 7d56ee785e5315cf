"""Binary weights container.

Layout::

    b"HFNW" | u32 format version | u64 header length | JSON header
    | little-endian float32 weights (layer order), then optimizer moments
    | u32 CRC32 of everything before it
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .layers import ShapeError
from .network import Network, NetworkSpec
from .optim import Optimizer, OptimizerConfig

MAGIC = b"HFNW"
FORMAT_VERSION = 1


class WeightsFormatError(ValueError):
    """Corrupt, truncated or incompatible weights file."""


@dataclass
class SavedState:
    network: Network
    norm_stats: dict | None = None
    optimizer: Optimizer | None = None
    meta: dict = field(default_factory=dict)


def serialize(network: Network, norm_stats: dict | None = None, optimizer: Optimizer | None = None, meta: dict | None = None) -> bytes:
    shapes = [list(p.shape) for p in network.params]
    header = {
        "format_version": FORMAT_VERSION,
        "spec": network.spec.to_dict(),
        "shapes": shapes,
        "seed": network.seed,
        "norm_stats": norm_stats,
        "optimizer": None,
        "meta": meta or {},
    }
    arrays = list(network.params)
    if optimizer is not None and optimizer.m:
        header["optimizer"] = {"config": optimizer.config.to_dict(), "t": optimizer.t}
        arrays += list(optimizer.m) + list(optimizer.v)
    head = json.dumps(header, sort_keys=True).encode()
    body = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in arrays)
    blob = MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(head)) + head + body
    return blob + struct.pack("<I", zlib.crc32(blob))


def deserialize(data: bytes, expected_spec: NetworkSpec | None = None) -> SavedState:
    if len(data) < 20 or data[:4] != MAGIC:
        raise WeightsFormatError("not a weights file (bad magic or truncated)")
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != crc:
        raise WeightsFormatError("checksum mismatch: file is truncated or corrupt")
    version, hlen = struct.unpack("<IQ", data[4:16])
    if version != FORMAT_VERSION:
        raise WeightsFormatError(f"unsupported format version {version}")
    header = json.loads(data[16 : 16 + hlen])
    spec = NetworkSpec.from_dict(header["spec"])
    if expected_spec is not None and spec != expected_spec:
        raise ShapeError(
            f"weights are for {spec.kind} (W={spec.window}, C={spec.channels}); "
            f"expected {expected_spec.kind} (W={expected_spec.window}, C={expected_spec.channels})"
        )
    shapes = [tuple(s) for s in header["shapes"]]
    buf = memoryview(data)[16 + hlen : -4]
    offset = 0

    def take(shape):
        nonlocal offset
        n = int(np.prod(shape))
        if offset + 4 * n > len(buf):
            raise WeightsFormatError("payload shorter than the header declares")
        arr = np.frombuffer(buf[offset : offset + 4 * n], dtype="<f4").reshape(shape).astype(np.float32)
        offset += 4 * n
        return arr

    params = [take(s) for s in shapes]
    network = Network(spec, params, seed=header.get("seed", 0))
    optimizer = None
    if header.get("optimizer"):
        optimizer = Optimizer(OptimizerConfig(**header["optimizer"]["config"]), t=header["optimizer"]["t"])
        optimizer.m = [take(s) for s in shapes]
        optimizer.v = [take(s) for s in shapes]
    if offset != len(buf):
        raise WeightsFormatError("payload longer than the header declares")
    return SavedState(network, header.get("norm_stats"), optimizer, header.get("meta", {}))


def save(path, network: Network, **kwargs) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(network, **kwargs))


def load(path, expected_spec: NetworkSpec | None = None) -> SavedState:
    with open(path, "rb") as fh:
        return deserialize(fh.read(), expected_spec)
