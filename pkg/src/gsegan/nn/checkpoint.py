"""Single-file tensor container with integrity checking.

Layout: magic "GSCK", u32 version, u64 manifest length, manifest JSON
(UTF-8), then raw little-endian blobs. The manifest lists every tensor
(name, shape, dtype, offset into the blob section) plus a free-form
meta dict and the SHA-256 of the blob section. Loads verify the hash
before returning anything.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, IntegrityError, UnsupportedFormatError

_MAGIC = b"GSCK"
_VERSION = 1
_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8"),
           "<i8": np.dtype("<i8"), "<u4": np.dtype("<u4")}


def save_tensors(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named arrays plus a JSON-able meta dict to one file."""
    entries = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        code = arr.dtype.newbyteorder("<").str
        if code not in _DTYPES:
            raise ValueError(f"unsupported dtype {arr.dtype} for tensor {name!r}")
        raw = arr.astype(_DTYPES[code], copy=False).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": code,
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    payload = b"".join(blobs)
    manifest = {
        "tensors": entries,
        "meta": meta if meta is not None else {},
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    mbytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQ", _VERSION, len(mbytes)))
        fh.write(mbytes)
        fh.write(payload)


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a container back; raises IntegrityError on hash mismatch."""
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != _MAGIC:
        raise FormatError(f"{path}: not a tensor container")
    version, mlen = struct.unpack("<IQ", data[4:16])
    if version != _VERSION:
        raise UnsupportedFormatError(f"{path}: container version {version}")
    if len(data) < 16 + mlen:
        raise FormatError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(data[16:16 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad manifest: {exc}") from exc
    payload = data[16 + mlen:]
    digest = hashlib.sha256(payload).hexdigest()
    if digest != manifest["payload_sha256"]:
        raise IntegrityError(f"{path}: payload hash mismatch")
    tensors = {}
    for entry in manifest["tensors"]:
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise UnsupportedFormatError(f"{path}: dtype {entry['dtype']}")
        start = entry["offset"]
        end = start + entry["nbytes"]
        if end > len(payload):
            raise FormatError(f"{path}: tensor {entry['name']!r} out of bounds")
        arr = np.frombuffer(payload[start:end], dtype=dtype).reshape(entry["shape"])
        tensors[entry["name"]] = arr.copy()
    return tensors, manifest["meta"]
