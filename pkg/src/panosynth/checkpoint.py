"""Binary checkpoint format.

Little-endian layout, trivially parseable from any language:

    magic  "S360" (4 bytes)
    u32    format version (currently 1)
    u32    config length, then that many bytes of UTF-8 JSON
    u32    tensor count
    per tensor:
        u32  name length, then the UTF-8 name
        u8   dtype tag (0=float32, 1=float64, 2=int64)
        u8   rank
        u32  x rank dims
        raw  little-endian payload

Round trips are bit-exact, including optimizer moments.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"S360"
FORMAT_VERSION = 1

_DTYPE_TAGS = {np.dtype("<f4"): 0, np.dtype("<f8"): 1, np.dtype("<i8"): 2}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}


class CheckpointFormatError(ValueError):
    """Bad magic, unsupported version, unknown dtype tag, or truncation."""


class ConfigConflictError(ValueError):
    """Checkpoint configuration conflicts with the requested run."""


@dataclass
class Checkpoint:
    """Model snapshot: config JSON plus a flat named-tensor table."""

    config: dict
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    @property
    def iteration(self) -> int:
        return int(self.config.get("iteration", 0))


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise CheckpointFormatError(f"truncated checkpoint: wanted {n} bytes, got {len(buf)}")
    return buf


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", ckpt.version))
    cfg = json.dumps(ckpt.config, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(cfg)))
    buf.write(cfg)
    buf.write(struct.pack("<I", len(ckpt.tensors)))
    for name, arr in ckpt.tensors.items():
        arr = np.asarray(arr)
        if not arr.flags.c_contiguous:
            arr = arr.copy()  # ascontiguousarray would promote rank-0 to rank-1
        if arr.dtype not in _DTYPE_TAGS:
            arr = arr.astype(np.float32)
        nb = name.encode("utf-8")
        buf.write(struct.pack("<I", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<BB", _DTYPE_TAGS[arr.dtype], arr.ndim))
        for d in arr.shape:
            buf.write(struct.pack("<I", d))
        buf.write(arr.astype(arr.dtype.newbyteorder("<")).tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4)
        if magic != MAGIC:
            raise CheckpointFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        (version,) = struct.unpack("<I", _read_exact(f, 4))
        if version != FORMAT_VERSION:
            raise CheckpointFormatError(f"unsupported checkpoint version {version}")
        (cfg_len,) = struct.unpack("<I", _read_exact(f, 4))
        try:
            config = json.loads(_read_exact(f, cfg_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointFormatError(f"unreadable config block: {e}") from e
        (count,) = struct.unpack("<I", _read_exact(f, 4))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4))
            name = _read_exact(f, name_len).decode("utf-8")
            tag, rank = struct.unpack("<BB", _read_exact(f, 2))
            if tag not in _TAG_DTYPES:
                raise CheckpointFormatError(f"unknown dtype tag {tag} for {name!r}")
            dims = tuple(struct.unpack("<I", _read_exact(f, 4))[0] for _ in range(rank))
            dtype = _TAG_DTYPES[tag]
            n_bytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize if rank else dtype.itemsize
            payload = _read_exact(f, n_bytes)
            tensors[name] = np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
        trailing = f.read(1)
        if trailing:
            raise CheckpointFormatError("trailing bytes after last tensor record")
    return Checkpoint(config=config, tensors=tensors, version=version)
