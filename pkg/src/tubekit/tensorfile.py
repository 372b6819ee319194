"""Portable named-tensor container (.tkt).

Layout: magic "TKT1", little-endian u32 header length, UTF-8 JSON header
listing [{"name", "shape", "dtype": "f32"}, ...], then each tensor's raw
little-endian float32 data concatenated in header order. Round trips are
bit-exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

__all__ = ["read_tensors", "write_tensors"]

_MAGIC = b"TKT1"


class TensorFileError(ValueError):
    pass


def write_tensors(tensors: dict, path) -> None:
    """Write an ordered {name: array} mapping as float32 tensors."""
    entries = []
    payload = []
    for name, arr in tensors.items():
        if not isinstance(name, str) or not name:
            raise TensorFileError("tensor names must be non-empty strings")
        a = np.ascontiguousarray(np.asarray(arr), dtype="<f4")
        entries.append({"name": name, "shape": list(a.shape), "dtype": "f32"})
        payload.append(a.tobytes())
    header = json.dumps(entries, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for chunk in payload:
            fh.write(chunk)


def read_tensors(path) -> dict:
    """Read a .tkt file back into an ordered {name: float32 array} mapping."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise TensorFileError(f"{path}: not a tensor file (bad magic)")
    if len(data) < 8:
        raise TensorFileError(f"{path}: truncated header")
    (header_len,) = struct.unpack("<I", data[4:8])
    header_end = 8 + header_len
    if len(data) < header_end:
        raise TensorFileError(f"{path}: truncated header")
    try:
        entries = json.loads(data[8:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TensorFileError(f"{path}: bad header: {exc}") from None
    if not isinstance(entries, list):
        raise TensorFileError(f"{path}: header must be a list")
    out = {}
    offset = header_end
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or set(entry) != {"name", "shape", "dtype"}:
            raise TensorFileError(f"{path}: header entry {i} malformed")
        name = entry["name"]
        shape = entry["shape"]
        if not isinstance(name, str) or not name:
            raise TensorFileError(f"{path}: header entry {i} has a bad name")
        if name in out:
            raise TensorFileError(f"{path}: duplicate tensor name '{name}'")
        if entry["dtype"] != "f32":
            raise TensorFileError(f"{path}: tensor '{name}' has unsupported dtype")
        if not isinstance(shape, list) or any(
            isinstance(d, bool) or not isinstance(d, int) or d < 0 for d in shape
        ):
            raise TensorFileError(f"{path}: tensor '{name}' has a bad shape")
        count = 1
        for d in shape:
            count *= d
        nbytes = count * 4
        if offset + nbytes > len(data):
            raise TensorFileError(f"{path}: truncated payload for tensor '{name}'")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape)
        out[name] = arr.copy()
        offset += nbytes
    if offset != len(data):
        raise TensorFileError(f"{path}: {len(data) - offset} trailing payload bytes")
    return out
