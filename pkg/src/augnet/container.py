"""Flat binary container for named float64 tensors.

Layout: magic (4 bytes) + format-version byte 0x01, then per entry
name length (u64 LE), UTF-8 name, rank (u64 LE), extents (u64 LE each),
values (f64 LE, row-major). Used for model checkpoints ("AUGM") and the
optional dataset cache ("AUGD").
"""

from __future__ import annotations

import struct

import numpy as np

VERSION = 0x01

MODEL_MAGIC = b"AUGM"
DATASET_MAGIC = b"AUGD"


class ContainerError(ValueError):
    """Raised for malformed container files."""


def write_container(path, entries: dict[str, np.ndarray], magic: bytes) -> None:
    if len(magic) != 4:
        raise ValueError("magic must be exactly 4 bytes")
    with open(path, "wb") as f:
        f.write(magic)
        f.write(bytes([VERSION]))
        for name, arr in entries.items():
            arr = np.asarray(arr, dtype="<f8")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<Q", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<Q", arr.ndim))
            for extent in arr.shape:
                f.write(struct.pack("<Q", extent))
            f.write(np.ascontiguousarray(arr).tobytes())


def read_container(path, magic: bytes) -> dict[str, np.ndarray]:
    entries: dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        head = f.read(5)
        if len(head) < 5 or head[:4] != magic:
            raise ContainerError(f"bad magic in {path}: expected {magic!r}, got {head[:4]!r}")
        if head[4] != VERSION:
            raise ContainerError(f"unsupported container version {head[4]}")
        while True:
            raw = f.read(8)
            if not raw:
                break
            if len(raw) < 8:
                raise ContainerError(f"truncated entry header in {path}")
            (name_len,) = struct.unpack("<Q", raw)
            name = f.read(name_len).decode("utf-8")
            raw = f.read(8)
            if len(raw) < 8:
                raise ContainerError(f"truncated rank field for {name!r}")
            (rank,) = struct.unpack("<Q", raw)
            shape = []
            for _ in range(rank):
                raw = f.read(8)
                if len(raw) < 8:
                    raise ContainerError(f"truncated extents for {name!r}")
                shape.append(struct.unpack("<Q", raw)[0])
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            payload = f.read(count * 8)
            if len(payload) < count * 8:
                raise ContainerError(f"truncated values for {name!r}")
            entries[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    return entries
