"""Binary tensor container used for model files, map files, and priors.

Layout (all integers little-endian):

    magic   4 bytes  b"RMTF"
    version u16      format version, currently 1
    count   u16      number of entries
    entry * count:
        name_len u16
        name     UTF-8 bytes
        rank     u8
        dims     u32 * rank
        payload  float32 * prod(dims), little-endian, row-major (C order)

Entries keep insertion order. Payloads are always float32 on disk; readers
get float32 arrays back and may upcast.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from .errors import TensorFormatError

MAGIC = b"RMTF"
VERSION = 1


def write_tensors(path_or_file, tensors: dict[str, np.ndarray]) -> None:
    """Write named tensors to an RMTF container (file path or binary stream)."""
    if hasattr(path_or_file, "write"):
        _write(path_or_file, tensors)
    else:
        with open(path_or_file, "wb") as fh:
            _write(fh, tensors)


def _write(fh, tensors: dict[str, np.ndarray]) -> None:
    if len(tensors) > 0xFFFF:
        raise TensorFormatError(f"too many entries: {len(tensors)}")
    fh.write(MAGIC)
    fh.write(struct.pack("<HH", VERSION, len(tensors)))
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF:
            raise TensorFormatError(f"entry name too long: {name!r}")
        if data.ndim > 0xFF:
            raise TensorFormatError(f"rank {data.ndim} exceeds u8 for {name!r}")
        fh.write(struct.pack("<H", len(raw_name)))
        fh.write(raw_name)
        fh.write(struct.pack("<B", data.ndim))
        for dim in data.shape:
            fh.write(struct.pack("<I", dim))
        fh.write(data.tobytes())


def dump_tensors(tensors: dict[str, np.ndarray]) -> bytes:
    """Serialize to bytes (used for stdout piping)."""
    buf = io.BytesIO()
    _write(buf, tensors)
    return buf.getvalue()


def read_tensors(path_or_file) -> dict[str, np.ndarray]:
    """Read all entries from an RMTF container, preserving entry order."""
    if hasattr(path_or_file, "read"):
        return _read(path_or_file)
    with open(path_or_file, "rb") as fh:
        return _read(fh)


def load_tensors(data: bytes) -> dict[str, np.ndarray]:
    """Deserialize from bytes (used for stdin piping)."""
    return _read(io.BytesIO(data))


def _take(fh, n: int, what: str) -> bytes:
    chunk = fh.read(n)
    if len(chunk) != n:
        raise TensorFormatError(f"truncated container while reading {what}")
    return chunk


def _read(fh) -> dict[str, np.ndarray]:
    if _take(fh, 4, "magic") != MAGIC:
        raise TensorFormatError("bad magic bytes; not an RMTF container")
    version, count = struct.unpack("<HH", _take(fh, 4, "header"))
    if version != VERSION:
        raise TensorFormatError(f"unsupported format version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", _take(fh, 2, "name length"))
        try:
            name = _take(fh, name_len, "name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TensorFormatError(f"entry name is not valid UTF-8: {exc}") from exc
        (rank,) = struct.unpack("<B", _take(fh, 1, f"rank of {name!r}"))
        dims = struct.unpack(f"<{rank}I", _take(fh, 4 * rank, f"dims of {name!r}"))
        n_items = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = _take(fh, 4 * n_items, f"payload of {name!r}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
        if name in out:
            raise TensorFormatError(f"duplicate entry {name!r}")
        out[name] = arr
    return out
