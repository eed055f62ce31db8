"""Binary container for named tensors (".bft" files).

Layout, all integers little-endian:

    magic   4 bytes  ``b"BFT1"``
    version u16      format version (currently 1)
    count   u16      number of tensors
    then per tensor:
        name length  u16
        name         UTF-8 bytes
        dtype code   u8   (1 = float32, 2 = float64, 3 = uint8)
        ndims        u8
        dims         u64 per dimension
        data         row-major element bytes

Round trips are bit-exact; malformed input raises
:class:`~beamforge.validation.ContainerFormatError` carrying the byte offset
at which parsing failed.
"""

from __future__ import annotations

import struct

import numpy as np

from ..validation import ContainerFormatError

MAGIC = b"BFT1"
VERSION = 1

_DTYPE_CODES = {
    np.dtype("<f4"): 1,
    np.dtype("<f8"): 2,
    np.dtype("u1"): 3,
}
_CODE_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("u1")}


def write_container(path, tensors):
    """Write an ordered mapping of ``name -> ndarray`` to ``path``.

    Arrays must be float32, float64, or uint8 (anything else raises
    ``TypeError`` rather than silently converting). Order is preserved.
    """
    items = list(tensors.items())
    if len(items) > 0xFFFF:
        raise ValueError("too many tensors for one container (max 65535)")
    seen = set()
    blobs = [MAGIC, struct.pack("<HH", VERSION, len(items))]
    for name, arr in items:
        if name in seen:
            raise ValueError(f"duplicate tensor name: {name!r}")
        seen.add(name)
        arr = np.asarray(arr)
        code = _DTYPE_CODES.get(arr.dtype.newbyteorder("<"))
        if code is None:
            raise TypeError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValueError(f"tensor name too long: {name!r}")
        if arr.ndim > 0xFF:
            raise ValueError(f"tensor {name!r} has too many dimensions")
        blobs.append(struct.pack("<H", len(encoded)))
        blobs.append(encoded)
        blobs.append(struct.pack("<BB", code, arr.ndim))
        blobs.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        blobs.append(np.ascontiguousarray(arr.astype(arr.dtype.newbyteorder("<"), copy=False)).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(blobs))


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.offset = 0

    def take(self, n, what):
        if self.offset + n > len(self.buf):
            raise ContainerFormatError(f"truncated container while reading {what}", self.offset)
        chunk = self.buf[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def read_container(path):
    """Read a container written by :func:`write_container`.

    Returns a ``dict`` of ``name -> ndarray`` in file order; arrays are
    bit-identical to what was written.
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    r = _Reader(buf)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise ContainerFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    version, count = r.unpack("<HH", "header")
    if version != VERSION:
        raise ContainerFormatError(f"unsupported container version {version}", 4)
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H", "tensor name length")
        name_at = r.offset
        raw_name = r.take(name_len, "tensor name")
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError:
            raise ContainerFormatError("tensor name is not valid UTF-8", name_at) from None
        if name in tensors:
            raise ContainerFormatError(f"duplicate tensor name {name!r}", name_at)
        code_at = r.offset
        code, ndims = r.unpack("<BB", "tensor dtype/ndims")
        dtype = _CODE_DTYPES.get(code)
        if dtype is None:
            raise ContainerFormatError(f"unknown dtype code {code}", code_at)
        dims = r.unpack(f"<{ndims}Q", "tensor dims")
        n_items = 1
        for d in dims:
            n_items *= d
        data = r.take(n_items * dtype.itemsize, f"tensor {name!r} data")
        tensors[name] = np.frombuffer(data, dtype=dtype).reshape(dims).copy()
    if r.offset != len(buf):
        raise ContainerFormatError("trailing bytes after final tensor", r.offset)
    return tensors
