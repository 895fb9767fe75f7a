"""Rotation + scalar-codebook quantizers.

:class:`MseQuantizer` rotates the unit-normalized input and stores the
nearest-level index of every coordinate.  :class:`ProdQuantizer` runs an
MSE stage one bit narrower and stores a one-bit sign sketch of the residual,
which makes inner-product estimates unbiased.

Both keep the original L2 norm as a float32 and rescale on decode.  Batch
methods take ``(n, d)`` arrays; single-vector methods wrap them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .codebook import MAX_BITS, Codebook, codebook_for_dimension
from .qjl import SQRT_HALF_PI, QjlSketch, make_sketch
from .rotation import Rotation, generate_rotation


@dataclass(frozen=True, eq=False)
class QuantizedVecMse:
    packed_idx: np.ndarray
    norm: float

    def to_bytes(self) -> bytes:
        return self.packed_idx.tobytes() + np.float32(self.norm).astype("<f4").tobytes()


@dataclass(frozen=True, eq=False)
class QuantizedVecProd:
    packed_idx: np.ndarray
    signs: np.ndarray
    gamma: float
    norm: float

    def to_bytes(self) -> bytes:
        tail = np.array([self.gamma, self.norm], dtype="<f4").tobytes()
        return self.packed_idx.tobytes() + self.signs.tobytes() + tail


@dataclass(frozen=True, eq=False)
class MseCodes:
    """Batch of MSE records: ``packed`` is ``(n, ceil(b*d/8))`` uint8."""

    packed: np.ndarray
    norms: np.ndarray  # float32

    def __len__(self):
        return len(self.norms)

    def __getitem__(self, i) -> QuantizedVecMse:
        return QuantizedVecMse(self.packed[i], float(self.norms[i]))

    def records(self) -> np.ndarray:
        """Serialized rows: packed indices followed by the little-endian norm."""
        norms = self.norms.astype("<f4").view(np.uint8).reshape(len(self), 4)
        return np.hstack([self.packed, norms])


@dataclass(frozen=True, eq=False)
class ProdCodes:
    packed: np.ndarray
    signs: np.ndarray
    gammas: np.ndarray  # float32
    norms: np.ndarray  # float32

    def __len__(self):
        return len(self.norms)

    def __getitem__(self, i) -> QuantizedVecProd:
        return QuantizedVecProd(self.packed[i], self.signs[i], float(self.gammas[i]), float(self.norms[i]))

    def records(self) -> np.ndarray:
        n = len(self)
        tail = np.stack([self.gammas, self.norms], axis=1).astype("<f4").view(np.uint8).reshape(n, 8)
        return np.hstack([self.packed, self.signs, tail])


def _as_batch(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != d:
        raise ValueError(f"expected vectors of dimension {d}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains NaN or Inf")
    return x


def _normalize(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    return x / safe[:, None], norms


class MseQuantizer:
    """``b``-bit rotated scalar quantizer in dimension ``d``.

    ``rotation`` may be passed in to share one transform between quantizers
    of different bit widths (it must match ``seed`` for files to decode).
    """

    def __init__(self, d: int, b: int, seed: int = 0, rotation: Rotation | None = None,
                 codebook: Codebook | None = None):
        if not 0 <= b <= MAX_BITS:
            raise ValueError(f"MSE bit width must be in [0, {MAX_BITS}], got {b}")
        if d < 1:
            raise ValueError("dimension must be >= 1")
        self.d = d
        self.b = b
        self.seed = int(seed)
        self.rotation = generate_rotation(seed, d) if rotation is None else rotation
        if self.rotation.d != d:
            raise ValueError("rotation dimension does not match quantizer")
        self.codebook = codebook_for_dimension(d, b) if codebook is None else codebook
        scale = self.codebook.scale_for(d)
        self.levels = self.codebook.centroids * scale
        self.boundaries = self.codebook.boundaries * scale

    @property
    def index_bytes(self) -> int:
        return (self.b * self.d + 7) // 8

    @property
    def record_bytes(self) -> int:
        return self.index_bytes + 4

    def _encode_unit(self, unit: np.ndarray) -> np.ndarray:
        y = unit @ self.rotation.matrix.T
        idx = np.searchsorted(self.boundaries, y, side="left").astype(np.uint8)
        return kernels.pack_rows(idx, self.b)

    def _decode_unit(self, packed: np.ndarray) -> np.ndarray:
        """Unit-norm reconstructions (float64) before norm rescaling."""
        idx = kernels.unpack_rows(packed, self.b, self.d)
        return self.levels[idx] @ self.rotation.matrix

    def _check_codes(self, codes: MseCodes) -> None:
        if codes.packed.shape[1] != self.index_bytes:
            raise ValueError(f"records carry {codes.packed.shape[1]} index bytes, quantizer expects {self.index_bytes}")

    def quantize_batch(self, x) -> MseCodes:
        unit, norms = _normalize(_as_batch(x, self.d))
        return MseCodes(self._encode_unit(unit), norms.astype(np.float32))

    def dequantize_batch(self, codes: MseCodes, dtype=np.float32) -> np.ndarray:
        self._check_codes(codes)
        out = self._decode_unit(codes.packed) * codes.norms.astype(np.float64)[:, None]
        return out.astype(dtype, copy=False)

    def quantize(self, x) -> QuantizedVecMse:
        return self.quantize_batch(x)[0]

    def dequantize(self, code: QuantizedVecMse, dtype=np.float32) -> np.ndarray:
        codes = MseCodes(np.asarray(code.packed_idx, dtype=np.uint8)[None, :], np.array([code.norm], np.float32))
        return self.dequantize_batch(codes, dtype)[0]

    def prepare_query(self, y) -> np.ndarray:
        """``Pi y`` in float64, computed once per query."""
        return _as_batch(y, self.d)[0] @ self.rotation.matrix.T

    def scores(self, codes: MseCodes, y_rotated) -> np.ndarray:
        """Estimated ``<y, x_i>`` for every record from the rotated query."""
        self._check_codes(codes)
        y_rotated = np.asarray(y_rotated, dtype=np.float64)
        lut = y_rotated[:, None] * self.levels[None, :]
        return kernels.score_lut(codes.packed, self.b, lut) * codes.norms.astype(np.float64)

    def pair_scores(self, codes: MseCodes, y_rotated: np.ndarray) -> np.ndarray:
        """Row-wise estimates ``<y_i, x_i>`` for paired queries ``(n, d)``."""
        self._check_codes(codes)
        idx = kernels.unpack_rows(codes.packed, self.b, self.d)
        return np.einsum("ij,ij->i", self.levels[idx], y_rotated) * codes.norms.astype(np.float64)

    def inner_estimate(self, code: QuantizedVecMse, y_rotated) -> float:
        codes = MseCodes(np.asarray(code.packed_idx, dtype=np.uint8)[None, :], np.array([code.norm], np.float32))
        return float(self.scores(codes, y_rotated)[0])


class ProdQuantizer:
    """``b``-bit unbiased inner-product quantizer (``b - 1`` MSE bits + one sign bit per sketch row)."""

    def __init__(self, d: int, b: int, seed: int = 0, m: int | None = None,
                 rotation: Rotation | None = None, sketch: QjlSketch | None = None):
        if not 1 <= b <= MAX_BITS + 1:
            raise ValueError(f"inner-product bit width must be in [1, {MAX_BITS + 1}], got {b}")
        self.d = d
        self.b = b
        self.seed = int(seed)
        self.mse = MseQuantizer(d, b - 1, seed, rotation=rotation)
        self.sketch = make_sketch(seed, d, m) if sketch is None else sketch
        if self.sketch.d != d:
            raise ValueError("sketch dimension does not match quantizer")
        self.m = self.sketch.m
        self._qjl_scale = SQRT_HALF_PI / self.m

    @property
    def index_bytes(self) -> int:
        return self.mse.index_bytes

    @property
    def record_bytes(self) -> int:
        return self.index_bytes + self.sketch.sign_bytes + 8

    def _check_codes(self, codes: ProdCodes) -> None:
        if codes.packed.shape[1] != self.index_bytes or codes.signs.shape[1] != self.sketch.sign_bytes:
            raise ValueError("record layout does not match quantizer parameters")

    def quantize_batch(self, x) -> ProdCodes:
        unit, norms = _normalize(_as_batch(x, self.d))
        if self.mse.b == 0:
            packed = np.zeros((len(unit), 0), dtype=np.uint8)
            resid = unit
        else:
            packed = self.mse._encode_unit(unit)
            resid = unit - self.mse._decode_unit(packed)
        signs = self.sketch.sign_bits(resid)
        gammas = np.linalg.norm(resid, axis=1)
        return ProdCodes(packed, signs, gammas.astype(np.float32), norms.astype(np.float32))

    def _mse_part(self, packed: np.ndarray) -> np.ndarray:
        if self.mse.b == 0:
            return np.zeros((len(packed), self.d))
        return self.mse._decode_unit(packed)

    def dequantize_batch(self, codes: ProdCodes, dtype=np.float32) -> np.ndarray:
        self._check_codes(codes)
        z = self.sketch.signs_pm1(codes.signs)
        qjl = (self._qjl_scale * codes.gammas.astype(np.float64))[:, None] * (z @ self.sketch._matrix64)
        out = (self._mse_part(codes.packed) + qjl) * codes.norms.astype(np.float64)[:, None]
        return out.astype(dtype, copy=False)

    def quantize(self, x) -> QuantizedVecProd:
        return self.quantize_batch(x)[0]

    def _single(self, code: QuantizedVecProd) -> ProdCodes:
        return ProdCodes(np.asarray(code.packed_idx, dtype=np.uint8)[None, :],
                         np.asarray(code.signs, dtype=np.uint8)[None, :],
                         np.array([code.gamma], np.float32), np.array([code.norm], np.float32))

    def dequantize(self, code: QuantizedVecProd, dtype=np.float32) -> np.ndarray:
        return self.dequantize_batch(self._single(code), dtype)[0]

    def prepare_query(self, y) -> tuple[np.ndarray, np.ndarray]:
        """``(Pi y, S y)`` in float64."""
        y = _as_batch(y, self.d)[0]
        return y @ self.mse.rotation.matrix.T, self.sketch.project(y)

    def scores(self, codes: ProdCodes, y_rotated, y_sketched) -> np.ndarray:
        self._check_codes(codes)
        y_rotated = np.asarray(y_rotated, dtype=np.float64)
        qjl = kernels.sign_dot(codes.signs, y_sketched) * (self._qjl_scale * codes.gammas.astype(np.float64))
        if self.mse.b > 0:
            lut = y_rotated[:, None] * self.mse.levels[None, :]
            qjl = qjl + kernels.score_lut(codes.packed, self.mse.b, lut)
        return qjl * codes.norms.astype(np.float64)

    def pair_scores(self, codes: ProdCodes, y_rotated: np.ndarray, y_sketched: np.ndarray) -> np.ndarray:
        self._check_codes(codes)
        z = self.sketch.signs_pm1(codes.signs)
        est = np.einsum("ij,ij->i", z, y_sketched) * (self._qjl_scale * codes.gammas.astype(np.float64))
        if self.mse.b > 0:
            idx = kernels.unpack_rows(codes.packed, self.mse.b, self.d)
            est = est + np.einsum("ij,ij->i", self.mse.levels[idx], y_rotated)
        return est * codes.norms.astype(np.float64)

    def inner_estimate(self, code: QuantizedVecProd, y_rotated, y_sketched) -> float:
        return float(self.scores(self._single(code), y_rotated, y_sketched)[0])


def quant_mse(q: MseQuantizer, x) -> QuantizedVecMse:
    return q.quantize(x)


def dequant_mse(q: MseQuantizer, c: QuantizedVecMse) -> np.ndarray:
    return q.dequantize(c)


def quant_prod(q: ProdQuantizer, x) -> QuantizedVecProd:
    return q.quantize(x)


def dequant_prod(q: ProdQuantizer, c: QuantizedVecProd) -> np.ndarray:
    return q.dequantize(c)


def inner_estimate_mse(q: MseQuantizer, c: QuantizedVecMse, y_rotated) -> float:
    return q.inner_estimate(c, y_rotated)


def inner_estimate_prod(q: ProdQuantizer, c: QuantizedVecProd, y_rotated, y_sketched) -> float:
    return q.inner_estimate(c, y_rotated, y_sketched)
