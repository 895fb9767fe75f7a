"""Entry points for the hot kernels, dispatched to the compiled or numpy backend.

The compiled extension is used when it imports; set ``ROTQUANT_PURE_PYTHON=1``
to force the numpy fallback.  ``BACKEND`` names the active one.
"""
import os

import numpy as np

from . import _kernels_py

if os.environ.get("ROTQUANT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "compiled"


def _rows_u8(a) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D array of rows, got shape {a.shape}")
    return np.ascontiguousarray(a, dtype=np.uint8)


def pack_rows(codes, b: int, impl=None) -> np.ndarray:
    """Pack each row of ``b``-bit codes LSB-first into ``ceil(b*count/8)`` bytes."""
    if not 0 <= b <= 8:
        raise ValueError(f"bits per code must be in [0, 8], got {b}")
    raw = np.asarray(codes)
    if raw.size and (raw.min() < 0 or raw.max() >= (1 << b)):
        raise ValueError(f"code value out of range for {b}-bit packing")
    return (impl or _impl).pack_rows(_rows_u8(raw), b)


def unpack_rows(packed, b: int, count: int, impl=None) -> np.ndarray:
    packed = _rows_u8(packed)
    if packed.shape[1] != (b * count + 7) // 8:
        raise ValueError(f"packed rows have {packed.shape[1]} bytes, expected {(b * count + 7) // 8}")
    return (impl or _impl).unpack_rows(packed, b, count)


def score_lut(packed, b: int, lut, impl=None) -> np.ndarray:
    """Per-row ``sum_j lut[j, code_j]``; ``lut`` has shape ``(count, 2**b)``."""
    packed = _rows_u8(packed)
    lut = np.ascontiguousarray(lut, dtype=np.float64)
    if lut.ndim != 2 or lut.shape[1] != 1 << b:
        raise ValueError(f"lookup table must have {1 << b} columns")
    if packed.shape[1] != (b * lut.shape[0] + 7) // 8:
        raise ValueError("packed rows do not match lookup table length")
    return (impl or _impl).score_lut(packed, b, lut)


def sign_dot(packed, v, impl=None) -> np.ndarray:
    packed = _rows_u8(packed)
    v = np.ascontiguousarray(v, dtype=np.float64)
    if packed.shape[1] != (len(v) + 7) // 8:
        raise ValueError("sign payload does not match vector length")
    return (impl or _impl).sign_dot(packed, v)


def topk(scores, k: int, impl=None) -> np.ndarray:
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be >= 1")
    return (impl or _impl).topk(scores, int(k))
