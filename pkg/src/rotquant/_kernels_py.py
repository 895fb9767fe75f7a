"""Pure numpy implementations of the hot kernels.

Same signatures and results as the compiled ``_kernels`` module; inputs are
already validated and C-contiguous by the time they arrive here.
"""
import numpy as np


def pack_rows(codes, b):
    n, count = codes.shape
    nbytes = (b * count + 7) // 8
    if nbytes == 0:
        return np.zeros((n, 0), dtype=np.uint8)
    shifts = np.arange(b, dtype=np.uint8)
    bits = ((codes[:, :, None] >> shifts) & 1).reshape(n, b * count)
    return np.packbits(bits, axis=1, bitorder="little")[:, :nbytes]


def unpack_rows(packed, b, count):
    n = packed.shape[0]
    if b == 0 or count == 0:
        return np.zeros((n, count), dtype=np.uint8)
    bits = np.unpackbits(packed, axis=1, count=b * count, bitorder="little")
    weights = (1 << np.arange(b)).astype(np.uint16)
    return (bits.reshape(n, count, b).astype(np.uint16) @ weights).astype(np.uint8)


def score_lut(packed, b, lut):
    """Row sums ``sum_j lut[j, code_j]`` over packed ``b``-bit codes."""
    count = lut.shape[0]
    codes = unpack_rows(packed, b, count)
    return lut[np.arange(count)[None, :], codes].sum(axis=1)


def sign_dot(packed, v):
    """``sum_i v_i * (+1 if bit_i else -1)`` per row."""
    bits = np.unpackbits(packed, axis=1, count=len(v), bitorder="little").astype(np.float64)
    return 2.0 * (bits @ v) - v.sum()


def topk(scores, k):
    """Indices of the ``k`` largest scores, descending; ties by ascending index."""
    n = len(scores)
    k = min(k, n)
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    if k < n:
        kth = np.partition(scores, n - k)[n - k]
        above = np.flatnonzero(scores > kth)
        ties = np.flatnonzero(scores == kth)[: k - len(above)]
        cand = np.concatenate([above, ties])
    else:
        cand = np.arange(n)
    order = np.lexsort((cand, -scores[cand]))
    return cand[order].astype(np.int64)
