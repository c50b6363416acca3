"""RTNSR1 tensor files and the weight container format.

Tensor file layout (little-endian throughout)::

    magic   6 bytes  b"RTNSR1"
    dtype   u8       0 = float32, 1 = float64
    ndim    u8
    dims    ndim * u32
    data    raw little-endian values, C order

Weight containers bundle many named RTNSR1 records behind a JSON header::

    magic        6 bytes  b"RTWGT1"
    header_len   u32
    header       JSON (utf-8): {"config": ..., "config_hash": ...,
                 "tensors": {name: {"offset": int, "shape": [...], "dtype": str}}}
    payload      concatenated RTNSR1 records; offsets are payload-relative

`config_hash` is the sha256 of the canonical (sorted-key, compact) JSON
encoding of the config dict; loads reject containers whose hash does not
match the requested config.
"""

from __future__ import annotations

import hashlib
import json
import struct
from typing import Dict

import numpy as np

from .errors import ConfigMismatch, ParseError

TENSOR_MAGIC = b"RTNSR1"
WEIGHTS_MAGIC = b"RTWGT1"

_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype(np.float32), 1: np.dtype(np.float64)}
_DTYPE_NAMES = {0: "f32", 1: "f64"}


def tensor_bytes(arr: np.ndarray) -> bytes:
    """Serialize one array as an RTNSR1 record."""
    arr = np.ascontiguousarray(arr)
    if arr.dtype not in _DTYPE_CODES:
        raise ParseError(f"unsupported dtype {arr.dtype}; use float32 or float64")
    code = _DTYPE_CODES[arr.dtype]
    head = TENSOR_MAGIC + struct.pack("<BB", code, arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.astype(arr.dtype.newbyteorder("<")).tobytes()


def tensor_from_bytes(buf: bytes, offset: int = 0):
    """Parse one RTNSR1 record; returns (array, bytes consumed)."""
    if buf[offset:offset + 6] != TENSOR_MAGIC:
        raise ParseError("not an RTNSR1 record")
    code, ndim = struct.unpack_from("<BB", buf, offset + 6)
    if code not in _CODE_DTYPES:
        raise ParseError(f"unknown dtype code {code}")
    dims = struct.unpack_from(f"<{ndim}I", buf, offset + 8)
    dtype = _CODE_DTYPES[code]
    start = offset + 8 + 4 * ndim
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    nbytes = count * dtype.itemsize
    if len(buf) < start + nbytes:
        raise ParseError("truncated RTNSR1 record")
    arr = np.frombuffer(buf[start:start + nbytes], dtype=dtype.newbyteorder("<"))
    arr = arr.astype(dtype).reshape(dims)
    return arr, start + nbytes - offset


def write_tensor(path, arr: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(tensor_bytes(arr))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        buf = f.read()
    arr, used = tensor_from_bytes(buf)
    if used != len(buf):
        raise ParseError("trailing bytes after RTNSR1 record")
    return arr


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def write_weights(path, tensors: Dict[str, np.ndarray], config: dict) -> None:
    """Write named tensors plus their config into a single container file."""
    records = {}
    payload = bytearray()
    for name, arr in tensors.items():
        rec = tensor_bytes(arr)
        records[name] = {
            "offset": len(payload),
            "shape": list(arr.shape),
            "dtype": _DTYPE_NAMES[_DTYPE_CODES[np.dtype(arr.dtype)]],
        }
        payload += rec
    header = {
        "config": config,
        "config_hash": config_hash(config),
        "tensors": records,
    }
    head = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        f.write(struct.pack("<I", len(head)))
        f.write(head)
        f.write(payload)


def read_weights_header(path) -> dict:
    with open(path, "rb") as f:
        magic = f.read(6)
        if magic != WEIGHTS_MAGIC:
            raise ParseError(f"not a weight container: magic {magic!r}")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
    return header


def read_weights(path, expect_config: dict | None = None):
    """Load a container; returns (tensors, header).

    When `expect_config` is given, the stored config hash must match it.
    """
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:6] != WEIGHTS_MAGIC:
        raise ParseError(f"not a weight container: magic {buf[:6]!r}")
    (hlen,) = struct.unpack_from("<I", buf, 6)
    header = json.loads(buf[10:10 + hlen].decode("utf-8"))
    stored = header.get("config_hash")
    if stored != config_hash(header.get("config", {})):
        raise ConfigMismatch("container header hash does not match its config")
    if expect_config is not None and stored != config_hash(expect_config):
        raise ConfigMismatch("weight container was written for a different config")
    base = 10 + hlen
    tensors = {}
    for name, rec in header["tensors"].items():
        arr, _ = tensor_from_bytes(buf, base + rec["offset"])
        if list(arr.shape) != list(rec["shape"]):
            raise ParseError(f"tensor {name}: header/record shape mismatch")
        tensors[name] = arr
    return tensors, header
