"""IDX file format (the MNIST container): big-endian header, raw array body."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import BadMagic, TruncatedFile
from .io import atomic_write_bytes

_DTYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_CODES = {v.str: k for k, v in _DTYPES.items()}

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def read_idx_array(path, expected_ndim: int | None = None) -> np.ndarray:
    """Parse any IDX file into an array of its declared shape."""
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise TruncatedFile(f"{path}: {len(data)} bytes, no header")
    zero, type_code, ndim = struct.unpack(">HBB", data[:4])
    if zero != 0 or type_code not in _DTYPES or ndim == 0:
        raise BadMagic(f"{path}: bad magic 0x{int.from_bytes(data[:4], 'big'):08x}")
    if expected_ndim is not None and ndim != expected_ndim:
        raise BadMagic(f"{path}: expected {expected_ndim} dimensions, header says {ndim}")
    header = 4 + 4 * ndim
    if len(data) < header:
        raise TruncatedFile(f"{path}: header cut short")
    shape = struct.unpack(f">{ndim}I", data[4:header])
    dtype = _DTYPES[type_code]
    need = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(data) - header < need:
        raise TruncatedFile(f"{path}: body has {len(data) - header} bytes, header promises {need}")
    return np.frombuffer(data, dtype=dtype, count=need // dtype.itemsize, offset=header).reshape(shape)


def write_idx_array(path, array) -> None:
    array = np.asarray(array)
    if array.dtype == np.uint8:
        dtype = np.dtype(">u1")
    else:
        dtype = array.dtype.newbyteorder(">")
    if dtype.str not in _CODES:
        raise ValueError(f"IDX cannot store dtype {array.dtype}")
    header = struct.pack(">HBB", 0, _CODES[dtype.str], array.ndim)
    header += struct.pack(f">{array.ndim}I", *array.shape)
    atomic_write_bytes(path, header + array.astype(dtype).tobytes())
