"""Flat little-endian binary weight checkpoints.

Layout::

    magic  b"CRYW"        4 bytes
    version               uint32
    count                 uint32
    count x record:
        name_len          uint32
        name              utf-8 bytes
        rank              uint32
        dims              rank x uint32
        payload           prod(dims) x float32

The training seed travels as a record named ``meta.seed`` holding the low
and high 16-bit halves of the seed (exact in float32).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

MAGIC = b"CRYW"
VERSION = 1
SEED_KEY = "meta.seed"


def save_checkpoint(path, state: dict[str, np.ndarray], seed: int | None = None) -> None:
    records = dict(state)
    if seed is not None:
        if not 0 <= seed < 2**32:
            raise ValueError(f"seed {seed} outside the 32-bit range")
        records[SEED_KEY] = np.array([seed & 0xFFFF, seed >> 16], dtype=np.float32)
    chunks = [MAGIC, struct.pack("<II", VERSION, len(records))]
    for name in sorted(records):
        arr = np.asarray(records[name], dtype="<f4")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], int | None]:
    """Return ``(state, seed)``; ``seed`` is None when none was recorded."""
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:4]!r}")
    try:
        version, count = struct.unpack_from("<II", buf, 4)
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        off = 12
        state = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<I", buf, off)
            off += 4
            name = buf[off : off + n].decode("utf-8")
            off += n
            (rank,) = struct.unpack_from("<I", buf, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}I", buf, off)
            off += 4 * rank
            size = int(np.prod(dims, dtype=np.int64))
            arr = np.frombuffer(buf, dtype="<f4", count=size, offset=off).reshape(dims)
            off += 4 * size
            state[name] = arr.astype(np.float32)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({exc})") from exc
    if off != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - off} trailing bytes")
    seed = None
    if SEED_KEY in state:
        lo, hi = state.pop(SEED_KEY)
        seed = int(lo) | (int(hi) << 16)
    return state, seed
