"""Binary tensor file format used by datasets and checkpoints.

Layout: magic "MVST", u8 version (=1), u8 dtype code (1=f32, 2=f64),
u8 rank, rank little-endian u32 extents, then row-major little-endian
scalar data. Readers reject wrong magic, version, dtype code, or a byte
count that does not match the header exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ConfigurationError

MAGIC = b"MVST"
VERSION = 1
_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_RCODES = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}


def write_tensor(path, arr: np.ndarray):
    arr = np.ascontiguousarray(arr)
    if arr.dtype not in _RCODES:
        raise ConfigurationError(f"unsupported dtype {arr.dtype} for tensor file")
    if not np.isfinite(arr).all():
        raise ConfigurationError("refusing to write non-finite tensor data")
    code = _RCODES[arr.dtype]
    with open(path, "wb") as f:
        f.write(struct.pack("<4sBBB", MAGIC, VERSION, code, arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(arr.astype(_CODES[code], copy=False).tobytes())


def read_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 7:
        raise ConfigurationError(f"{path}: truncated tensor file")
    magic, version, code, rank = struct.unpack_from("<4sBBB", raw, 0)
    if magic != MAGIC:
        raise ConfigurationError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ConfigurationError(f"{path}: unsupported version {version}")
    if code not in _CODES:
        raise ConfigurationError(f"{path}: unknown dtype code {code}")
    off = 7
    if len(raw) < off + 4 * rank:
        raise ConfigurationError(f"{path}: truncated header")
    shape = struct.unpack_from(f"<{rank}I", raw, off)
    off += 4 * rank
    dt = _CODES[code]
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    if len(raw) - off != count * dt.itemsize:
        raise ConfigurationError(f"{path}: payload size mismatch")
    arr = np.frombuffer(raw, dtype=dt, count=count, offset=off)
    return arr.reshape(shape).astype(dt.newbyteorder("="), copy=True)
