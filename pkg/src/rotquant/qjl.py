"""One-bit sign sketch of residual vectors.

``S`` is an ``m x d`` matrix of i.i.d. standard normals.  A vector ``r`` is
stored as ``sign(S r)`` (one bit per row) plus its norm ``gamma``; the
decoded vector ``sqrt(pi/2) / m * gamma * S^T signs`` is an unbiased
estimator of ``r`` in every inner product.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from ._seeding import stream_rng

SQRT_HALF_PI = math.sqrt(math.pi / 2)


@dataclass(frozen=True, eq=False)
class QjlSketch:
    d: int
    m: int
    seed: int
    matrix: np.ndarray  # float32, shape (m, d)

    @cached_property
    def _matrix64(self) -> np.ndarray:
        return self.matrix.astype(np.float64)

    @property
    def sign_bytes(self) -> int:
        return (self.m + 7) // 8

    def _check(self, x, width: int | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        width = self.d if width is None else width
        if x.shape[-1] != width or x.ndim > 2:
            raise ValueError(f"expected vectors of dimension {width}, got shape {x.shape}")
        return x

    def project(self, x) -> np.ndarray:
        """``S x`` in float64 for one vector or a batch."""
        x = self._check(x)
        return x @ self._matrix64.T

    def sign_bits(self, r) -> np.ndarray:
        """Packed ``sign(S r)`` rows, bit set for ``+1`` (``sign(0) = +1``)."""
        r = np.atleast_2d(self._check(r))
        bits = (self.project(r) >= 0).astype(np.uint8)
        return kernels.pack_rows(bits, 1)

    def signs_pm1(self, packed) -> np.ndarray:
        """Unpack sign rows to a float64 matrix of +-1."""
        packed = np.atleast_2d(np.asarray(packed, dtype=np.uint8))
        if packed.shape[-1] != self.sign_bytes:
            raise ValueError(f"sign payload must be {self.sign_bytes} bytes, got {packed.shape[-1]}")
        return kernels.unpack_rows(packed, 1, self.m).astype(np.float64) * 2.0 - 1.0


@dataclass(frozen=True, eq=False)
class QjlCode:
    signs: np.ndarray  # packed, ceil(m/8) bytes
    gamma: float


def make_sketch(seed: int, d: int, m: int | None = None) -> QjlSketch:
    m = d if m is None else int(m)
    if d < 1 or m < 1:
        raise ValueError(f"sketch needs d >= 1 and m >= 1, got d={d}, m={m}")
    s = stream_rng(seed, "qjl").standard_normal((m, d)).astype(np.float32)
    s.setflags(write=False)
    return QjlSketch(d, m, int(seed), s)


def qjl_quantize(sk: QjlSketch, r) -> QjlCode:
    r = sk._check(r)
    if r.ndim != 1:
        raise ValueError("qjl_quantize takes a single vector")
    return QjlCode(sk.sign_bits(r)[0], float(np.linalg.norm(r)))


def _check_code(sk: QjlSketch, code: QjlCode) -> None:
    if len(code.signs) != sk.sign_bytes:
        raise ValueError(f"code has {len(code.signs)} sign bytes, sketch expects {sk.sign_bytes}")


def qjl_dequantize(sk: QjlSketch, code: QjlCode) -> np.ndarray:
    _check_code(sk, code)
    if code.gamma == 0:
        return np.zeros(sk.d)
    z = sk.signs_pm1(code.signs)[0]
    return SQRT_HALF_PI / sk.m * code.gamma * (z @ sk._matrix64)


def qjl_inner_estimate(sk: QjlSketch, code: QjlCode, y, y_sketched=None) -> float:
    """``<y, qjl_dequantize(code)>`` computed from ``S y`` without decoding."""
    _check_code(sk, code)
    sy = sk.project(y) if y_sketched is None else sk._check(y_sketched, sk.m)
    dot = kernels.sign_dot(code.signs[None, :], sy)[0]
    return SQRT_HALF_PI / sk.m * code.gamma * float(dot)
