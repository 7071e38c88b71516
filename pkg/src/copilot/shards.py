"""Binary tensor container shared by dataset shards and model checkpoints.

A container is a directory holding ``data.bin`` and ``manifest.json``.

``data.bin`` layout (little-endian)::

    b"CPLT"  magic
    u32      format version
    repeated per tensor:
        u8       dtype code (0 = float32, 1 = uint8, 2 = bool)
        u8       ndim
        u32[ndim] dims
        payload  raw C-order bytes

``manifest.json`` records the version, a free-form ``meta`` document (config
echo, window index), and for every tensor its name, dtype, shape, the byte
offset of its header and of its payload, and the CRC32C of its payload.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import crc32c
import numpy as np

MAGIC = b"CPLT"
VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("u1"), 2: np.dtype("?")}
CODES = {np.dtype("float32"): 0, np.dtype("uint8"): 1, np.dtype("bool"): 2}


class ShardError(Exception):
    code = "shard_error"


class ShardVersionError(ShardError):
    code = "version_mismatch"


class ShardTruncatedError(ShardError):
    code = "truncated"


class ShardChecksumError(ShardError):
    code = "checksum_failure"


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1)


def write_container(path, tensors, meta=None) -> dict:
    """Write ``tensors`` (iterable of ``(name, array)``) and return the manifest."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    with open(path / "data.bin", "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", VERSION))
        offset = 8
        for name, arr in tensors:
            arr = np.asarray(arr)
            if arr.dtype == np.float64:
                arr = arr.astype(np.float32)
            if arr.dtype not in CODES:
                raise TypeError(f"unsupported dtype {arr.dtype} for tensor {name!r}")
            code = CODES[arr.dtype]
            arr = np.ascontiguousarray(arr, dtype=DTYPES[code])
            header = struct.pack("<BB", code, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
            payload = arr.tobytes()
            fh.write(header)
            fh.write(payload)
            entries.append({
                "name": name, "dtype": code, "shape": list(arr.shape),
                "offset": offset, "data_offset": offset + len(header),
                "nbytes": len(payload), "crc32c": crc32c.crc32c(payload),
            })
            offset += len(header) + len(payload)
    manifest = {"format": "CPLT", "version": VERSION, "size": offset,
                "meta": meta or {}, "tensors": entries}
    (path / "manifest.json").write_text(_dumps(manifest))
    return manifest


def read_manifest(path) -> dict:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except FileNotFoundError:
        raise FileNotFoundError(f"no manifest.json in {path}") from None
    if manifest.get("version") != VERSION:
        raise ShardVersionError(f"manifest version {manifest.get('version')} != {VERSION}")
    return manifest


def read_container(path, verify=True, mmap=False):
    """Return ``(manifest, {name: array})``; raises a ``ShardError`` subclass on damage."""
    path = Path(path)
    manifest = read_manifest(path)
    data_path = path / "data.bin"
    size = os.path.getsize(data_path)
    with open(data_path, "rb") as fh:
        head = fh.read(8)
    if len(head) < 8:
        raise ShardTruncatedError(f"{data_path} shorter than its header")
    if head[:4] != MAGIC:
        raise ShardError(f"bad magic {head[:4]!r}")
    (version,) = struct.unpack("<I", head[4:])
    if version != VERSION:
        raise ShardVersionError(f"data.bin version {version} != {VERSION}")
    if size < manifest["size"]:
        raise ShardTruncatedError(f"{data_path} has {size} bytes, manifest expects {manifest['size']}")
    if mmap:
        buf = np.memmap(data_path, dtype=np.uint8, mode="r")
    else:
        buf = np.fromfile(data_path, dtype=np.uint8)
    out = {}
    for e in manifest["tensors"]:
        code, ndim = struct.unpack("<BB", bytes(buf[e["offset"]:e["offset"] + 2]))
        dims = struct.unpack(f"<{ndim}I", bytes(buf[e["offset"] + 2:e["offset"] + 2 + 4 * ndim]))
        if code != e["dtype"] or list(dims) != e["shape"]:
            raise ShardError(f"tensor header mismatch for {e['name']!r}")
        raw = buf[e["data_offset"]:e["data_offset"] + e["nbytes"]]
        if verify and crc32c.crc32c(raw) != e["crc32c"]:
            raise ShardChecksumError(f"checksum mismatch for tensor {e['name']!r}")
        out[e["name"]] = raw.view(DTYPES[code]).reshape(dims)
    return manifest, out
