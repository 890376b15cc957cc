"""Framed binary wire format for the query service boundary.

Requests and responses are serialized even for in-process calls, so a
networked deployment is a drop-in replacement.  Frames are little-endian:

result   "JQR1" | u32 column count | u64 event count | columns
column   u32 name length | name utf8 | u8 kind (0 float, 1 int, 2 bool)
         | u8 depth | depth * (u64 length | int64 offsets)
         | u64 value count | values (f64 / i64; bools packed to bits)
request  "JQQ1" | u32 dataset length | dataset utf8 | u32 query length | query utf8
error    "JQE1" | u32 category length | category | u32 message length | message

Encoding is bit-exact: equal results always produce equal bytes, which is
what lets cache hits be verified by byte comparison.
"""
from __future__ import annotations

import struct

import numpy as np

from ..errors import JagqError
from ..jagged import ElementKind, JaggedArray

RESULT_MAGIC = b"JQR1"
REQUEST_MAGIC = b"JQQ1"
ERROR_MAGIC = b"JQE1"

_KIND_CODES = {ElementKind.FLOAT: 0, ElementKind.INT: 1, ElementKind.BOOL: 2}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


class WireError(JagqError):
    pass


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise WireError("truncated frame")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")

    def done(self) -> bool:
        return self.pos == len(self.data)


def encode_result(n_events: int, columns: list[tuple[str, JaggedArray]]) -> bytes:
    parts = [RESULT_MAGIC, struct.pack("<IQ", len(columns), n_events)]
    for name, array in columns:
        parts.append(_pack_str(name))
        parts.append(struct.pack("<BB", _KIND_CODES[array.kind], array.depth))
        for level in array.offset_levels:
            data = np.ascontiguousarray(level, dtype="<i8")
            parts.append(struct.pack("<Q", len(data)))
            parts.append(data.tobytes())
        parts.append(struct.pack("<Q", len(array.values)))
        if array.kind is ElementKind.BOOL:
            parts.append(np.packbits(array.values).tobytes())
        elif array.kind is ElementKind.INT:
            parts.append(np.ascontiguousarray(array.values, dtype="<i8").tobytes())
        else:
            parts.append(np.ascontiguousarray(array.values, dtype="<f8").tobytes())
    return b"".join(parts)


def decode_result(data: bytes) -> tuple[int, list[tuple[str, JaggedArray]]]:
    reader = _Reader(data)
    if reader.take(4) != RESULT_MAGIC:
        raise WireError("not a result frame")
    n_cols = reader.u32()
    n_events = reader.u64()
    columns = []
    for _ in range(n_cols):
        name = reader.string()
        kind = _CODE_KINDS.get(reader.u8())
        if kind is None:
            raise WireError("unknown element kind")
        depth = reader.u8()
        levels = []
        for _ in range(depth):
            n = reader.u64()
            levels.append(np.frombuffer(reader.take(8 * n), dtype="<i8").astype(np.int64))
        n_values = reader.u64()
        if kind is ElementKind.BOOL:
            packed = np.frombuffer(reader.take((n_values + 7) // 8), dtype=np.uint8)
            values = np.unpackbits(packed, count=n_values).astype(bool)
        elif kind is ElementKind.INT:
            values = np.frombuffer(reader.take(8 * n_values), dtype="<i8").astype(np.int64)
        else:
            values = np.frombuffer(reader.take(8 * n_values), dtype="<f8").astype(np.float64)
        columns.append((name, JaggedArray(levels, values, kind)))
    if not reader.done():
        raise WireError("trailing bytes after result frame")
    return n_events, columns


def encode_request(dataset_id: str, query_text: str) -> bytes:
    return REQUEST_MAGIC + _pack_str(dataset_id) + _pack_str(query_text)


def decode_request(data: bytes) -> tuple[str, str]:
    reader = _Reader(data)
    if reader.take(4) != REQUEST_MAGIC:
        raise WireError("not a request frame")
    dataset = reader.string()
    query = reader.string()
    if not reader.done():
        raise WireError("trailing bytes after request frame")
    return dataset, query


def encode_error(category: str, message: str) -> bytes:
    return ERROR_MAGIC + _pack_str(category) + _pack_str(message)


def decode_error(data: bytes) -> tuple[str, str] | None:
    if not data.startswith(ERROR_MAGIC):
        return None
    reader = _Reader(data)
    reader.take(4)
    return reader.string(), reader.string()
