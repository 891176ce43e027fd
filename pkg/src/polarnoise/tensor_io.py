"""Self-describing tensor files (``.pten``).

Layout, all integers little-endian::

    offset 0   8 bytes   magic  b"PTENSOR\\x01"
    offset 8   4 bytes   uint32 header length L
    offset 12  L bytes   UTF-8 JSON header
    offset 12+L          payload, row-major, little-endian

Header schema (version 1)::

    {"schema": "polarnoise.tensor", "version": 1,
     "shape": [...], "dtype": "f32" | "u16",
     "channels": [...] | null, "meta": {...}}

``meta`` is free-form JSON; the stack loader understands ``exposure``,
``gain``, ``black_level``, ``white_level`` and ``frame_index``.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, MalformedHeaderError, TruncatedPayloadError, UnknownDtypeError

__all__ = [
    "MAGIC",
    "EXTENSION",
    "SCHEMA_VERSION",
    "TensorFile",
    "write_tensor",
    "read_tensor",
    "save",
    "load",
    "normalize_raw",
]

MAGIC = b"PTENSOR\x01"
EXTENSION = ".pten"
SCHEMA_NAME = "polarnoise.tensor"
SCHEMA_VERSION = 1
_DTYPES = {"f32": np.dtype("<f4"), "u16": np.dtype("<u2")}
_MAX_HEADER = 16 * 1024 * 1024


@dataclass
class TensorFile:
    data: np.ndarray
    channels: list | None = None
    meta: dict = field(default_factory=dict)

    @property
    def dtype_code(self) -> str:
        kind = np.asarray(self.data).dtype
        if kind == np.uint16:
            return "u16"
        if kind.kind == "f":
            return "f32"
        raise UnknownDtypeError(f"cannot store dtype {kind}; use float32 or uint16")


def _encode(tf: TensorFile) -> bytes:
    code = tf.dtype_code
    data = np.ascontiguousarray(np.asarray(tf.data), dtype=_DTYPES[code])
    if tf.channels is not None and data.ndim and len(tf.channels) != data.shape[-1]:
        raise DataError(f"{len(tf.channels)} channel names for last axis of length {data.shape[-1]}")
    header = {
        "schema": SCHEMA_NAME,
        "version": SCHEMA_VERSION,
        "shape": list(data.shape),
        "dtype": code,
        "channels": list(tf.channels) if tf.channels is not None else None,
        "meta": tf.meta,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")
    return MAGIC + struct.pack("<I", len(hbytes)) + hbytes + data.tobytes(order="C")


def _decode(buf: bytes) -> TensorFile:
    if len(buf) < len(MAGIC) + 4 or buf[: len(MAGIC)] != MAGIC:
        raise MalformedHeaderError("not a polarnoise tensor file (bad magic)")
    (hlen,) = struct.unpack_from("<I", buf, len(MAGIC))
    start = len(MAGIC) + 4
    if hlen > _MAX_HEADER or start + hlen > len(buf):
        raise MalformedHeaderError("header length exceeds file size")
    try:
        header = json.loads(buf[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeaderError(f"header is not valid JSON: {exc}") from None
    if not isinstance(header, dict) or header.get("schema") != SCHEMA_NAME:
        raise MalformedHeaderError("header schema missing or wrong")
    if header.get("version") != SCHEMA_VERSION:
        raise MalformedHeaderError(f"unsupported header version {header.get('version')!r}")
    shape = header.get("shape")
    if not isinstance(shape, list) or not all(isinstance(n, int) and n >= 0 for n in shape):
        raise MalformedHeaderError(f"bad shape {shape!r}")
    code = header.get("dtype")
    if code not in _DTYPES:
        raise UnknownDtypeError(f"unknown dtype {code!r}")
    dtype = _DTYPES[code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    payload = buf[start + hlen :]
    if len(payload) < expected:
        raise TruncatedPayloadError(f"payload has {len(payload)} bytes, header promises {expected}")
    if len(payload) > expected:
        raise MalformedHeaderError(f"{len(payload) - expected} trailing bytes after payload")
    data = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
    channels = header.get("channels")
    meta = header.get("meta") or {}
    if not isinstance(meta, dict):
        raise MalformedHeaderError("meta must be an object")
    return TensorFile(data=data, channels=channels, meta=meta)


def write_tensor(path, tf: TensorFile) -> Path:
    """Write atomically (temp file + rename)."""
    path = Path(path)
    blob = _encode(tf)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=EXTENSION)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_tensor(path) -> TensorFile:
    with open(path, "rb") as fh:
        return _decode(fh.read())


def save(path, data, channels=None, **meta) -> Path:
    return write_tensor(path, TensorFile(np.asarray(data), channels, meta))


def load(path) -> np.ndarray:
    return read_tensor(path).data


def normalize_raw(raw, black, white) -> np.ndarray:
    """Linearize sensor counts: ``(v - black) / (white - black)``, negatives clipped to 0.

    Values above the white level are kept (> 1) so saturation can be flagged.
    """
    if not white > black:
        raise DataError(f"white level ({white}) must exceed black level ({black})")
    out = (np.asarray(raw, dtype=np.float64) - black) / float(white - black)
    return np.maximum(out, 0.0).astype(np.float32)
