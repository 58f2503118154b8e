"""
Section codec for checkpoint payloads.

Payload = Section*
Section = Length(name) + name (UTF-8) + kind (1 byte) + Length(body) + body
Length  = variable (1–5 bytes), high bits of the first byte give the size:
  0xxxxxxx            < 0x80
  10xxxxxx + 1 byte   < 0x4000
  110xxxxx + 2 bytes  < 0x200000
  1110xxxx + 3 bytes  < 0x10000000
  11110000 + 4 bytes  otherwise

Section kinds:
  KIND_JSON   UTF-8 JSON document
  KIND_ARRAY  ndim (1 byte), ndim × int64 shape, then float64 values;
              little-endian, row-major
"""

import json
import struct

import numpy as np

from .errors import CheckpointError

KIND_JSON = 1
KIND_ARRAY = 2


# ─── Length Encoding ──────────────────────────────────────────────────────────

def encode_length(length: int) -> bytes:
    if length < 0:
        raise ValueError(f"length must be ≥ 0, got {length}")
    if length < 0x80:
        return struct.pack("B", length)
    elif length < 0x4000:
        return struct.pack(">H", length | 0x8000)
    elif length < 0x200000:
        return struct.pack(">I", length | 0xC00000)[1:]
    elif length < 0x10000000:
        return struct.pack(">I", length | 0xE0000000)
    elif length < 0x100000000:
        return b"\xF0" + struct.pack(">I", length)
    raise ValueError(f"length {length} does not fit in 32 bits")


def _need(data: bytes, offset: int, n: int) -> None:
    if offset + n > len(data):
        raise CheckpointError(
            f"payload truncated: need {n} byte(s) at offset {offset}, have {len(data) - offset}",
            reason="truncation",
        )


def decode_length(data: bytes, offset: int) -> tuple[int, int]:
    """Returns (length, new_offset)."""
    _need(data, offset, 1)
    b = data[offset]
    if b < 0x80:
        return b, offset + 1
    elif b < 0xC0:
        _need(data, offset, 2)
        return struct.unpack(">H", data[offset:offset + 2])[0] & 0x3FFF, offset + 2
    elif b < 0xE0:
        _need(data, offset, 3)
        return struct.unpack(">I", b"\x00" + data[offset:offset + 3])[0] & 0x1FFFFF, offset + 3
    elif b < 0xF0:
        _need(data, offset, 4)
        return struct.unpack(">I", data[offset:offset + 4])[0] & 0x0FFFFFFF, offset + 4
    elif b == 0xF0:
        _need(data, offset, 5)
        return struct.unpack(">I", data[offset + 1:offset + 5])[0], offset + 5
    raise CheckpointError(f"invalid length prefix 0x{b:02X} at offset {offset}")


# ─── Section bodies ───────────────────────────────────────────────────────────

def encode_array(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    if arr.ndim > 255:
        raise ValueError("too many dimensions")
    header = struct.pack("B", arr.ndim) + b"".join(struct.pack("<q", n) for n in arr.shape)
    return header + arr.tobytes()


def decode_array(body: bytes) -> np.ndarray:
    _need(body, 0, 1)
    ndim = body[0]
    _need(body, 1, 8 * ndim)
    shape = struct.unpack(f"<{ndim}q", body[1:1 + 8 * ndim])
    start = 1 + 8 * ndim
    count = int(np.prod(shape)) if ndim else 1
    if len(body) - start != 8 * count:
        raise CheckpointError(f"array section of shape {shape} has {len(body) - start} value bytes")
    return np.frombuffer(body, dtype="<f8", offset=start).reshape(shape).astype(np.float64)


# ─── Sections ─────────────────────────────────────────────────────────────────

def encode_section(name: str, value) -> bytes:
    raw_name = name.encode("utf-8")
    if isinstance(value, np.ndarray):
        kind, body = KIND_ARRAY, encode_array(value)
    else:
        kind, body = KIND_JSON, json.dumps(value, sort_keys=True).encode("utf-8")
    return encode_length(len(raw_name)) + raw_name + struct.pack("B", kind) + encode_length(len(body)) + body


def build_payload(sections: list[tuple[str, object]]) -> bytes:
    return b"".join(encode_section(name, value) for name, value in sections)


def decode_payload(data: bytes) -> dict[str, object]:
    """Decode every section; order is preserved."""
    out: dict[str, object] = {}
    offset = 0
    while offset < len(data):
        n, offset = decode_length(data, offset)
        _need(data, offset, n + 1)
        name = data[offset:offset + n].decode("utf-8")
        kind = data[offset + n]
        offset += n + 1
        size, offset = decode_length(data, offset)
        _need(data, offset, size)
        body = data[offset:offset + size]
        offset += size
        if name in out:
            raise CheckpointError(f"duplicate section '{name}'")
        if kind == KIND_ARRAY:
            out[name] = decode_array(body)
        elif kind == KIND_JSON:
            try:
                out[name] = json.loads(body.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as e:
                raise CheckpointError(f"section '{name}' holds invalid JSON: {e}") from e
        else:
            raise CheckpointError(f"section '{name}' has unknown kind {kind}")
    return out
