"""GCVDR1 raster container: magic, uint32 LE width/height/channels, float32 LE payload."""

import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"GCVDR1"
_HEADER = struct.Struct("<6sIII")


class RasterError(ValueError):
    pass


def encode(array) -> bytes:
    a = np.asarray(array, dtype="<f4")
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise RasterError(f"raster must be HxW or HxWxC, got shape {a.shape}")
    h, w, c = a.shape
    return _HEADER.pack(MAGIC, w, h, c) + np.ascontiguousarray(a).tobytes()


def decode(data: bytes) -> np.ndarray:
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise RasterError("raster: bad magic")
    if len(data) < _HEADER.size:
        raise RasterError("raster: truncated header")
    _, w, h, c = _HEADER.unpack_from(data)
    expected = w * h * c * 4
    payload = data[_HEADER.size :]
    if len(payload) < expected:
        raise RasterError("raster: truncated payload")
    if len(payload) > expected:
        raise RasterError("raster: trailing bytes")
    return np.frombuffer(payload, dtype="<f4").reshape(h, w, c).copy()


def write(path, array) -> None:
    # temp file + rename so a reader never sees a partial raster
    path = Path(path)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_bytes(encode(array))
    os.replace(tmp, path)


def read(path) -> np.ndarray:
    return decode(Path(path).read_bytes())
