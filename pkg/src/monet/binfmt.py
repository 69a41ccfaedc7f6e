"""Length-prefixed binary container for arrays.

Layout::

    magic      4 bytes
    version    1 byte
    meta_len   u32, followed by a UTF-8 JSON object
    count      u32
    count x block:
        name_len u16, name (UTF-8)
        dtype    u8 (index into DTYPES)
        ndim     u8, then ndim x u64 shape
        nbytes   u64, then raw little-endian C-order data

All integers are little-endian.
"""

import json
import struct

import numpy as np

from .errors import ParseError

VERSION = 1

DTYPES = ("<f8", "<i8", "<i4", "<f4", "|b1", "<u8")


def write_blocks(f, arrays):
    f.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        code = np.dtype(arr.dtype).newbyteorder("<").str
        if code not in DTYPES:
            raise TypeError(f"unsupported dtype {arr.dtype} for {name!r}")
        raw = np.ascontiguousarray(arr, dtype=code).tobytes()
        name_b = name.encode()
        f.write(struct.pack("<H", len(name_b)))
        f.write(name_b)
        f.write(struct.pack("<BB", DTYPES.index(code), arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        f.write(struct.pack("<Q", len(raw)))
        f.write(raw)


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.path = path
        self.pos = 0

    def take(self, fmt):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise ParseError("truncated file", path=self.path)
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out

    def raw(self, nbytes):
        if self.pos + nbytes > len(self.data):
            raise ParseError("truncated file", path=self.path)
        out = self.data[self.pos:self.pos + nbytes]
        self.pos += nbytes
        return out

    def blocks(self):
        (count,) = self.take("<I")
        arrays = {}
        for _ in range(count):
            (name_len,) = self.take("<H")
            name = self.raw(name_len).decode()
            code, ndim = self.take("<BB")
            if code >= len(DTYPES):
                raise ParseError(f"unknown dtype code {code}", path=self.path)
            shape = self.take(f"<{ndim}Q")
            (nbytes,) = self.take("<Q")
            arr = np.frombuffer(self.raw(nbytes), dtype=DTYPES[code])
            arrays[name] = arr.reshape(shape).copy()
        return arrays


def open_reader(path, magic):
    """Read ``path`` fully and check its magic and version."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != magic:
        raise ParseError(f"bad magic {data[:4]!r}, expected {magic!r}", path=path)
    if len(data) < 5 or data[4] != VERSION:
        raise ParseError("unsupported format version", path=path)
    reader = _Reader(data, path)
    reader.pos = 5
    return reader


def write_arrays(path, magic, arrays, meta=None):
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<B", VERSION))
        f.write(struct.pack("<I", len(meta_bytes)))
        f.write(meta_bytes)
        write_blocks(f, arrays)


def read_arrays(path, magic):
    """Return ``(arrays, meta)`` from a file written by :func:`write_arrays`."""
    reader = open_reader(path, magic)
    (meta_len,) = reader.take("<I")
    meta = json.loads(reader.raw(meta_len).decode())
    return reader.blocks(), meta
