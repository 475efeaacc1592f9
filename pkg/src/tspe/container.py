"""Versioned binary tensor container.

Layout::

    b"TSPE" | version byte 0x01 | uint32 LE header length | UTF-8 JSON header
    | raw little-endian float payloads, in header order

The header holds ``format_version``, ``created``, ``config`` and
``tensors`` (a list of ``{name, shape, dtype}``) plus any extra metadata.
``created`` comes from ``SOURCE_DATE_EPOCH`` (default 0) so that repeated
runs write identical bytes.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from collections import OrderedDict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

MAGIC = b"TSPE"
VERSION = 1
_DTYPES = {"float32": "<f4", "float64": "<f8"}


class ContainerError(ValueError):
    pass


def _created() -> str:
    stamp = int(os.environ.get("SOURCE_DATE_EPOCH", "0"))
    return datetime.fromtimestamp(stamp, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False,
                      allow_nan=False).encode("utf-8")


def dumps(tensors, config=None, meta=None, created: str | None = None) -> bytes:
    """Serialize an ordered mapping of name -> float32/float64 array."""
    specs, payload = [], []
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        dtype = arr.dtype.name
        if dtype not in _DTYPES:
            raise ContainerError(f"tensor {name!r} has unsupported dtype {dtype}")
        specs.append({"name": name, "shape": list(arr.shape), "dtype": dtype})
        payload.append(np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes())
    header = dict(meta or {})
    header.update({
        "format_version": VERSION,
        "created": created if created is not None else _created(),
        "config": config if config is not None else {},
        "tensors": specs,
    })
    head = _canonical_json(header)
    return MAGIC + bytes([VERSION]) + struct.pack("<I", len(head)) + head + b"".join(payload)


def loads(blob: bytes):
    """Inverse of :func:`dumps`: returns ``(header, OrderedDict of arrays)``."""
    if blob[:4] != MAGIC:
        raise ContainerError("not a TSPE container (bad magic)")
    if len(blob) < 9 or blob[4] != VERSION:
        raise ContainerError(f"unsupported container version {blob[4] if len(blob) > 4 else '?'}")
    (hlen,) = struct.unpack("<I", blob[5:9])
    try:
        header = json.loads(blob[9:9 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"corrupt header: {exc}") from None
    if not isinstance(header, dict) or not isinstance(header.get("tensors"), list):
        raise ContainerError("corrupt header: missing tensor table")
    offset = 9 + hlen
    tensors = OrderedDict()
    for spec in header["tensors"]:
        try:
            dt = np.dtype(_DTYPES[spec["dtype"]])
            count = int(np.prod(spec["shape"], dtype=np.int64))
        except (KeyError, TypeError, ValueError):
            raise ContainerError(f"corrupt tensor entry {spec!r}") from None
        size = count * dt.itemsize
        if offset + size > len(blob):
            raise ContainerError(f"payload truncated in tensor {spec['name']!r}")
        arr = np.frombuffer(blob, dtype=dt, count=count, offset=offset)
        tensors[spec["name"]] = arr.reshape(spec["shape"]).astype(spec["dtype"])
        offset += size
    if offset != len(blob):
        raise ContainerError(f"{len(blob) - offset} trailing bytes after payload")
    return header, tensors


def atomic_write(path, data: bytes | str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(path, tensors, config=None, meta=None) -> None:
    atomic_write(path, dumps(tensors, config, meta))


def load(path):
    return loads(Path(path).read_bytes())


def resave_bytes(blob: bytes) -> bytes:
    """Load then dump again, preserving every header field."""
    header, tensors = loads(blob)
    meta = {k: v for k, v in header.items()
            if k not in ("format_version", "created", "config", "tensors")}
    return dumps(tensors, header.get("config"), meta, created=header.get("created"))
