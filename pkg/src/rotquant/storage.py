"""Bit packing, the ``TBQ1`` index file, and fvecs/ivecs/raw vector files.

``TBQ1`` layout (all little-endian)::

    offset  size  field
    0       4     magic  b"TBQ1"
    4       2     format_version (uint16)
    6       1     mode (0 = MSE, 1 = PROD)
    7       1     codebook source (0 = gaussian, 1 = exact sphere law)
    8       4     d (uint32)
    12      4     b (uint32)
    16      4     m (uint32, 0 for MSE)
    20      8     n (uint64)
    28      8     master_seed (uint64)
    36      ...   n fixed-size records

An MSE record is ``ceil(b*d/8)`` index bytes then the float32 norm.  A PROD
record is ``ceil((b-1)*d/8)`` index bytes, ``ceil(m/8)`` sign bytes, the
float32 residual norm and the float32 vector norm.  Codes are packed
LSB-first; sign bit set means ``+1``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels

MAGIC = b"TBQ1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHBBIIIQQ")
HEADER_SIZE = _HEADER.size

MODE_MSE = "mse"
MODE_PROD = "prod"
_MODE_CODES = {MODE_MSE: 0, MODE_PROD: 1}
_SOURCE_CODES = {"gaussian": 0, "beta": 1}


class IndexFormatError(ValueError):
    """Base class for unreadable index files."""


class BadMagicError(IndexFormatError):
    pass


class UnsupportedVersionError(IndexFormatError):
    pass


class TruncatedIndexError(IndexFormatError):
    pass


class VectorFileError(ValueError):
    """Malformed fvecs/ivecs/raw input; ``offset`` is the failing byte position."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class PackedCodes:
    data: bytes
    b: int
    count: int


def pack_indices(indices, b: int) -> PackedCodes:
    """Pack ``count`` codes of ``b`` bits LSB-first."""
    indices = np.asarray(indices)
    if indices.ndim != 1:
        raise ValueError("pack_indices takes a 1-D sequence")
    if indices.size and (indices.min() < 0 or indices.max() >= (1 << b)):
        raise ValueError(f"index out of range for {b}-bit codes")
    packed = kernels.pack_rows(indices.astype(np.uint8)[None, :], b)[0]
    return PackedCodes(packed.tobytes(), b, len(indices))


def unpack_indices(codes: PackedCodes | bytes, b: int | None = None, count: int | None = None) -> np.ndarray:
    if isinstance(codes, PackedCodes):
        data = codes.data
        b = codes.b if b is None else b
        count = codes.count if count is None else count
    else:
        data = bytes(codes)
    if b is None or count is None:
        raise ValueError("bits per code and count are required for raw bytes")
    expected = (b * count + 7) // 8
    if len(data) != expected:
        raise ValueError(f"packed length {len(data)} does not match {count} codes of {b} bits ({expected} bytes)")
    row = np.frombuffer(data, dtype=np.uint8)[None, :]
    return kernels.unpack_rows(row, b, count)[0]


@dataclass(frozen=True)
class IndexHeader:
    mode: str
    d: int
    b: int
    m: int
    n: int
    master_seed: int
    source: str = "gaussian"
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.mode not in _MODE_CODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.source not in _SOURCE_CODES:
            raise ValueError(f"unknown codebook source {self.source!r}")

    @property
    def record_bytes(self) -> int:
        if self.mode == MODE_MSE:
            return (self.b * self.d + 7) // 8 + 4
        return ((self.b - 1) * self.d + 7) // 8 + (self.m + 7) // 8 + 8

    def pack(self) -> bytes:
        return _HEADER.pack(MAGIC, self.format_version, _MODE_CODES[self.mode], _SOURCE_CODES[self.source],
                            self.d, self.b, self.m, self.n, self.master_seed)

    @classmethod
    def unpack(cls, raw: bytes) -> "IndexHeader":
        if len(raw) < 4 or raw[:4] != MAGIC:
            raise BadMagicError(f"not a TBQ1 index (magic {raw[:4]!r})")
        if len(raw) < HEADER_SIZE:
            raise TruncatedIndexError(f"header needs {HEADER_SIZE} bytes, file has {len(raw)}")
        _, version, mode, source, d, b, m, n, seed = _HEADER.unpack(raw[:HEADER_SIZE])
        if version != FORMAT_VERSION:
            raise UnsupportedVersionError(f"index format version {version}, reader supports {FORMAT_VERSION}")
        modes = {v: k for k, v in _MODE_CODES.items()}
        sources = {v: k for k, v in _SOURCE_CODES.items()}
        if mode not in modes or source not in sources:
            raise IndexFormatError(f"invalid mode/source codes {mode}/{source}")
        return cls(modes[mode], d, b, m, n, seed, sources[source], version)


def write_index(path, header: IndexHeader, records: np.ndarray) -> None:
    records = np.ascontiguousarray(records, dtype=np.uint8)
    if records.shape != (header.n, header.record_bytes):
        raise ValueError(f"records shape {records.shape} does not match header ({header.n}, {header.record_bytes})")
    with open(path, "wb") as fh:
        fh.write(header.pack())
        fh.write(records.tobytes())


def read_index(path) -> tuple[IndexHeader, np.ndarray]:
    raw = Path(path).read_bytes()
    header = IndexHeader.unpack(raw)
    expected = HEADER_SIZE + header.n * header.record_bytes
    if len(raw) < expected:
        raise TruncatedIndexError(f"index declares {header.n} records ({expected} bytes), file has {len(raw)}")
    if len(raw) > expected:
        raise IndexFormatError(f"{len(raw) - expected} trailing bytes after the last record")
    body = np.frombuffer(raw, dtype=np.uint8, offset=HEADER_SIZE)
    return header, body.reshape(header.n, header.record_bytes)


def _read_vecs(path, dtype) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) == 0:
        return np.zeros((0, 0), dtype=dtype)
    if len(raw) < 4:
        raise VectorFileError("file shorter than one dimension prefix", 0)
    d = int(np.frombuffer(raw, dtype="<i4", count=1)[0])
    if d <= 0:
        raise VectorFileError(f"invalid vector dimension {d}", 0)
    stride = 4 * (d + 1)
    n_full, rest = divmod(len(raw), stride)
    words = np.frombuffer(raw, dtype="<i4", count=n_full * (d + 1)).reshape(n_full, d + 1)
    bad = np.flatnonzero(words[:, 0] != d)
    if len(bad):
        i = int(bad[0])
        raise VectorFileError(f"record {i} has dimension prefix {int(words[i, 0])}, expected {d}", i * stride)
    if rest:
        raise VectorFileError(f"truncated record {n_full}: {rest} trailing bytes", n_full * stride)
    return np.frombuffer(raw, dtype=dtype, count=n_full * (d + 1)).reshape(n_full, d + 1)[:, 1:].copy()


def read_fvecs(path) -> np.ndarray:
    """Vectors from an fvecs file (int32 dimension then float32 values per record)."""
    return _read_vecs(path, "<f4").astype(np.float32)


def read_ivecs(path) -> np.ndarray:
    return _read_vecs(path, "<i4").astype(np.int32)


def _write_vecs(path, arr: np.ndarray, dtype) -> None:
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ValueError("expected a 2-D array")
    n, d = arr.shape
    out = np.empty((n, d + 1), dtype="<i4")
    out[:, 0] = d
    out[:, 1:] = arr.astype(dtype).view("<i4")
    Path(path).write_bytes(out.tobytes())


def write_fvecs(path, arr) -> None:
    _write_vecs(path, arr, "<f4")


def write_ivecs(path, arr) -> None:
    _write_vecs(path, arr, "<i4")


def read_raw_f32(path) -> np.ndarray:
    """Raw little-endian float32 matrix with a ``<path>.shape.json`` sidecar ``{"shape": [n, d]}``."""
    sidecar = Path(str(path) + ".shape.json")
    try:
        shape = tuple(json.loads(sidecar.read_text())["shape"])
    except (OSError, KeyError, ValueError) as exc:
        raise VectorFileError(f"missing or invalid shape sidecar {sidecar}: {exc}") from exc
    raw = Path(path).read_bytes()
    n, d = shape
    if len(raw) != 4 * n * d:
        raise VectorFileError(f"raw matrix has {len(raw)} bytes, shape {shape} needs {4 * n * d}",
                              min(len(raw), 4 * n * d))
    return np.frombuffer(raw, dtype="<f4").reshape(n, d).astype(np.float32)


def write_raw_f32(path, arr) -> None:
    arr = np.asarray(arr, dtype="<f4")
    Path(path).write_bytes(arr.tobytes())
    Path(str(path) + ".shape.json").write_text(json.dumps({"shape": list(arr.shape), "dtype": "float32"}))


def read_vectors(path) -> np.ndarray:
    """Dispatch on extension: ``.fvecs``, ``.ivecs`` or raw float32 with sidecar."""
    suffix = Path(path).suffix.lower()
    if suffix == ".fvecs":
        return read_fvecs(path)
    if suffix == ".ivecs":
        return read_ivecs(path).astype(np.float32)
    return read_raw_f32(path)
