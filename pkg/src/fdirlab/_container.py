"""Versioned binary container: magic header + version + uncompressed npz.

Arrays are stored raw (``np.savez``, no compression) so float payloads keep
their exact bit patterns on disk.
"""

import io
import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

_VERSION = struct.Struct("<H")


def write(path, magic, version, arrays, meta):
    """Write ``arrays`` (name -> ndarray) and a JSON-able ``meta`` dict."""
    payload = dict(arrays)
    payload["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    buf = io.BytesIO()
    np.savez(buf, **payload)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(_VERSION.pack(version))
        fh.write(buf.getvalue())
    return path


def read(path, magic, version):
    """Return ``(arrays, meta)``; raise FormatError before building anything."""
    raw = Path(path).read_bytes()
    head = len(magic)
    if raw[:head] != magic:
        raise FormatError(f"{path}: bad magic header {raw[:head]!r}")
    if len(raw) < head + _VERSION.size:
        raise FormatError(f"{path}: truncated header")
    (found,) = _VERSION.unpack_from(raw, head)
    if found != version:
        raise FormatError(f"{path}: format version {found}, expected {version}")
    try:
        with np.load(io.BytesIO(raw[head + _VERSION.size:]), allow_pickle=False) as npz:
            arrays = {k: npz[k] for k in npz.files}
    except Exception as exc:  # zipfile/ValueError variants
        raise FormatError(f"{path}: corrupt payload ({exc})") from exc
    if "__meta__" not in arrays:
        raise FormatError(f"{path}: missing metadata block")
    meta = json.loads(arrays.pop("__meta__").tobytes().decode("utf-8"))
    return arrays, meta
