"""Writer for the binary tensor archive format.

Independent implementation of the layout documented in the quantizer's
docs/formats.md: little-endian, magic "MPCT", version 1, tensor count, then
per tensor a length-prefixed UTF-8 name, a dtype code (0 float32, 1 int8,
2 int32), the rank, the extents as u64, and the row-major payload. Entries
are sorted by name so equal content always produces equal bytes, which is
what makes the archive checksum in the export manifest meaningful.
"""

import hashlib
import struct

import numpy as np

MAGIC = b"MPCT"
VERSION = 1

# (kind, itemsize) -> (code, canonical little-endian dtype)
_DTYPES = {
    ("f", 4): (0, "<f4"),
    ("i", 1): (1, "i1"),
    ("i", 4): (2, "<i4"),
}


def pack_archive(tensors: dict[str, np.ndarray]) -> bytes:
    """Serialize a name -> array mapping to archive bytes."""
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", len(tensors))]
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        key = (arr.dtype.kind, arr.dtype.itemsize)
        if key not in _DTYPES:
            raise ValueError(f"tensor {name!r}: unsupported dtype {arr.dtype}")
        code, canonical = _DTYPES[key]
        arr = np.ascontiguousarray(arr.astype(canonical, copy=False))
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<BB", code, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def save_archive(tensors: dict[str, np.ndarray], path: str) -> None:
    blob = pack_archive(tensors)
    with open(path, "wb") as fh:
        fh.write(blob)


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
