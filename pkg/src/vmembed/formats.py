"""Binary containers used across the package.

Three little-endian formats:

    VMNF  -- one float32 matrix (frame features, or a 1×D track vector)
    VMPM  -- named float32 matrices (fitted projection models)
    VMCK  -- named dtype-tagged tensors plus a JSON meta blob and a
             trailing CRC32 (network checkpoints)

VMCK tensors are written as float64: checkpoints must round-trip
bit-identically so training can resume on the exact trajectory.
"""

from __future__ import annotations

import json
import struct
import zlib
from typing import Any

import numpy as np

from .errors import CorruptCheckpoint, CorruptFile, MalformedHeader

VMNF_MAGIC = b"VMNF"
VMPM_MAGIC = b"VMPM"
VMCK_MAGIC = b"VMCK"
FORMAT_VERSION = 1

_U32 = struct.Struct("<I")


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise CorruptFile(f"truncated {what}: wanted {n} bytes, got {len(buf)}")
    return buf


def _read_u32(f, what: str) -> int:
    return _U32.unpack(_read_exact(f, 4, what))[0]


def _check_header(f, magic: bytes, path: str) -> None:
    got = f.read(4)
    if got != magic:
        raise MalformedHeader(
            f"{path}: bad magic {got!r}, expected {magic!r}")
    version = _read_u32(f, "version")
    if version != FORMAT_VERSION:
        raise MalformedHeader(f"{path}: unsupported version {version}")


# ---------------------------------------------------------------------------
# VMNF: single matrix
# ---------------------------------------------------------------------------

def write_vmnf(path: str, matrix: np.ndarray) -> None:
    """Write a 2-D array as float32 row-major."""
    m = np.ascontiguousarray(matrix, dtype=np.float32)
    if m.ndim != 2:
        raise ValueError(f"VMNF stores 2-D matrices, got ndim={m.ndim}")
    with open(path, "wb") as f:
        f.write(VMNF_MAGIC)
        f.write(_U32.pack(FORMAT_VERSION))
        f.write(_U32.pack(m.shape[0]))
        f.write(_U32.pack(m.shape[1]))
        f.write(m.tobytes())


def read_vmnf(path: str) -> np.ndarray:
    """Read a VMNF matrix back as float64."""
    with open(path, "rb") as f:
        _check_header(f, VMNF_MAGIC, path)
        rows = _read_u32(f, "rows")
        cols = _read_u32(f, "cols")
        data = _read_exact(f, rows * cols * 4, "matrix payload")
        if f.read(1):
            raise CorruptFile(f"{path}: trailing bytes after payload")
    flat = np.frombuffer(data, dtype="<f4")
    return flat.reshape(rows, cols).astype(np.float64)


# ---------------------------------------------------------------------------
# VMPM: named matrices
# ---------------------------------------------------------------------------

def write_vmpm(path: str, matrices: dict[str, np.ndarray]) -> None:
    """Write named matrices; scalars go in as 1×1."""
    with open(path, "wb") as f:
        f.write(VMPM_MAGIC)
        f.write(_U32.pack(FORMAT_VERSION))
        for name, value in matrices.items():
            m = np.atleast_2d(np.asarray(value, dtype=np.float32))
            if m.ndim != 2:
                raise ValueError(f"{name}: VMPM stores 2-D matrices")
            raw = name.encode("utf-8")
            f.write(_U32.pack(len(raw)))
            f.write(raw)
            f.write(_U32.pack(m.shape[0]))
            f.write(_U32.pack(m.shape[1]))
            f.write(np.ascontiguousarray(m).tobytes())


def read_vmpm(path: str) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        _check_header(f, VMPM_MAGIC, path)
        while True:
            head = f.read(4)
            if not head:
                break
            if len(head) != 4:
                raise CorruptFile(f"{path}: truncated record header")
            name_len = _U32.unpack(head)[0]
            name = _read_exact(f, name_len, "name").decode("utf-8")
            rows = _read_u32(f, "rows")
            cols = _read_u32(f, "cols")
            data = _read_exact(f, rows * cols * 4, f"matrix {name!r}")
            out[name] = np.frombuffer(data, dtype="<f4").reshape(
                rows, cols).astype(np.float64)
    return out


# ---------------------------------------------------------------------------
# VMCK: checkpoint = meta JSON + named tensors + CRC32
# ---------------------------------------------------------------------------

_DTYPE_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_TAG_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def write_vmck(path: str, meta: dict[str, Any],
               tensors: dict[str, np.ndarray]) -> None:
    body = bytearray()
    body += VMCK_MAGIC
    body += _U32.pack(FORMAT_VERSION)
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    body += _U32.pack(len(blob))
    body += blob
    body += _U32.pack(len(tensors))
    for name, value in tensors.items():
        # ascontiguousarray would promote 0-d tensors to 1-D; asarray keeps
        # the shape and tobytes() serialises in C order regardless
        arr = np.asarray(value, order="C")
        if arr.dtype not in _DTYPE_TAGS:
            arr = np.asarray(arr, dtype=np.float64, order="C")
        raw = name.encode("utf-8")
        body += _U32.pack(len(raw))
        body += raw
        body += struct.pack("<B", _DTYPE_TAGS[arr.dtype])
        body += _U32.pack(arr.ndim)
        for dim in arr.shape:
            body += _U32.pack(dim)
        body += arr.tobytes()
    body += _U32.pack(zlib.crc32(bytes(body)) & 0xFFFFFFFF)
    with open(path, "wb") as f:
        f.write(bytes(body))


def read_vmck(path: str) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        body = f.read()
    if len(body) < 12 or body[:4] != VMCK_MAGIC:
        raise CorruptCheckpoint(f"{path}: bad magic or truncated header")
    stored_crc = _U32.unpack(body[-4:])[0]
    if zlib.crc32(body[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CorruptCheckpoint(f"{path}: CRC mismatch")
    pos = 4
    try:
        version = _U32.unpack_from(body, pos)[0]
        pos += 4
        if version != FORMAT_VERSION:
            raise CorruptCheckpoint(f"{path}: unsupported version {version}")
        blob_len = _U32.unpack_from(body, pos)[0]
        pos += 4
        meta = json.loads(body[pos:pos + blob_len].decode("utf-8"))
        pos += blob_len
        count = _U32.unpack_from(body, pos)[0]
        pos += 4
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            name_len = _U32.unpack_from(body, pos)[0]
            pos += 4
            name = body[pos:pos + name_len].decode("utf-8")
            pos += name_len
            tag = body[pos]
            pos += 1
            ndim = _U32.unpack_from(body, pos)[0]
            pos += 4
            shape = []
            for _ in range(ndim):
                shape.append(_U32.unpack_from(body, pos)[0])
                pos += 4
            dtype = _TAG_DTYPES[tag]
            nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            chunk = body[pos:pos + nbytes]
            if len(chunk) != nbytes:
                raise CorruptCheckpoint(f"{path}: truncated tensor {name!r}")
            tensors[name] = np.frombuffer(chunk, dtype=dtype).reshape(shape).copy()
            pos += nbytes
    except (struct.error, KeyError, UnicodeDecodeError,
            json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: {exc}") from exc
    if pos != len(body) - 4:
        raise CorruptCheckpoint(f"{path}: trailing bytes")
    return meta, tensors
