"""Binary tensor archive: named numpy arrays, little-endian, bit-exact.

Layout: magic ``MPCT``, u32 version (=1), u64 tensor count, then per tensor
u32 name length, UTF-8 name, u8 dtype code (0=f32, 1=i8, 2=i32), u8 ndim,
ndim x u64 dims, row-major payload.
"""

import io
import struct
from pathlib import Path

import numpy as np

from .errors import (BadMagicError, DuplicateNameError, TruncatedArchiveError,
                     UnsupportedDtypeError, UnsupportedVersionError)

MAGIC = b"MPCT"
VERSION = 1

_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("i1"): 1, np.dtype("<i4"): 2}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("i1"), 2: np.dtype("<i4")}


def save_archive(tensors: dict[str, np.ndarray], path) -> None:
    """Write tensors under their names; iteration order is sorted for determinism."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IQ", VERSION, len(tensors)))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        if arr.dtype not in _DTYPE_CODES:
            raise UnsupportedDtypeError(
                f"tensor {name!r} has dtype {arr.dtype}; archive stores f32/i8/i32")
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<I", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_archive(path) -> dict[str, np.ndarray]:
    """Read an archive back into a name -> array map (arrays read-only)."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a tensor archive (magic {data[:4]!r})")
    if len(data) < 16:
        raise TruncatedArchiveError(f"{path}: header cut short")
    version, count = struct.unpack_from("<IQ", data, 4)
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: archive version {version}, reader supports {VERSION}")

    tensors: dict[str, np.ndarray] = {}
    off = 16
    for index in range(count):
        where = f"{path}: tensor #{index}"
        if off + 4 > len(data):
            raise TruncatedArchiveError(f"{where}: name length cut short")
        (name_len,) = struct.unpack_from("<I", data, off)
        off += 4
        if off + name_len > len(data):
            raise TruncatedArchiveError(f"{where}: name cut short")
        name = data[off:off + name_len].decode("utf-8")
        off += name_len
        where = f"{path}: tensor {name!r}"
        if name in tensors:
            raise DuplicateNameError(f"{where}: stored twice")
        if off + 2 > len(data):
            raise TruncatedArchiveError(f"{where}: descriptor cut short")
        dtype_code, ndim = struct.unpack_from("<BB", data, off)
        off += 2
        if dtype_code not in _CODE_DTYPES:
            raise UnsupportedDtypeError(f"{where}: unknown dtype code {dtype_code}")
        if off + 8 * ndim > len(data):
            raise TruncatedArchiveError(f"{where}: dims cut short")
        dims = struct.unpack_from(f"<{ndim}Q", data, off)
        off += 8 * ndim
        dtype = _CODE_DTYPES[dtype_code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize if ndim else dtype.itemsize
        if off + nbytes > len(data):
            raise TruncatedArchiveError(
                f"{where}: payload cut short ({len(data) - off} of {nbytes} bytes)")
        arr = np.frombuffer(data, dtype=dtype, count=nbytes // dtype.itemsize,
                            offset=off).reshape(dims)
        arr.flags.writeable = False
        tensors[name] = arr
        off += nbytes
    return tensors


def scalar(value, dtype=np.float32) -> np.ndarray:
    """Shape-(1,) tensor for storing per-layer scales and thresholds."""
    return np.asarray([value], dtype=dtype)
