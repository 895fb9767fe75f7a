# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: bit packing, packed-code scoring and top-k selection.

Mirrors ``_kernels_py`` exactly; see ``kernels`` for the validated entry points.
"""
import numpy as np

from libc.stdint cimport uint8_t, uint64_t, int64_t


def pack_rows(const uint8_t[:, ::1] codes, int b):
    cdef Py_ssize_t n = codes.shape[0], count = codes.shape[1]
    cdef Py_ssize_t nbytes = (b * count + 7) // 8
    out_arr = np.zeros((n, nbytes), dtype=np.uint8)
    cdef uint8_t[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, pos
    cdef uint64_t acc
    cdef int nbits
    with nogil:
        for i in range(n):
            acc = 0
            nbits = 0
            pos = 0
            for j in range(count):
                acc |= (<uint64_t>codes[i, j]) << nbits
                nbits += b
                while nbits >= 8:
                    out[i, pos] = <uint8_t>(acc & 0xFF)
                    acc >>= 8
                    nbits -= 8
                    pos += 1
            if nbits > 0:
                out[i, pos] = <uint8_t>(acc & 0xFF)
    return out_arr


def unpack_rows(const uint8_t[:, ::1] packed, int b, Py_ssize_t count):
    cdef Py_ssize_t n = packed.shape[0]
    out_arr = np.zeros((n, count), dtype=np.uint8)
    if b == 0 or count == 0:
        return out_arr
    cdef uint8_t[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, pos
    cdef uint64_t acc, mask = (1 << b) - 1
    cdef int nbits
    with nogil:
        for i in range(n):
            acc = 0
            nbits = 0
            pos = 0
            for j in range(count):
                while nbits < b:
                    acc |= (<uint64_t>packed[i, pos]) << nbits
                    pos += 1
                    nbits += 8
                out[i, j] = <uint8_t>(acc & mask)
                acc >>= b
                nbits -= b
    return out_arr


def score_lut(const uint8_t[:, ::1] packed, int b, const double[:, ::1] lut):
    cdef Py_ssize_t n = packed.shape[0], count = lut.shape[0]
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j, pos
    cdef uint64_t acc, mask = (1 << b) - 1
    cdef int nbits
    cdef double s
    if b == 0:
        s = 0.0
        for j in range(count):
            s += lut[j, 0]
        out_arr[:] = s
        return out_arr
    with nogil:
        for i in range(n):
            acc = 0
            nbits = 0
            pos = 0
            s = 0.0
            for j in range(count):
                while nbits < b:
                    acc |= (<uint64_t>packed[i, pos]) << nbits
                    pos += 1
                    nbits += 8
                s += lut[j, acc & mask]
                acc >>= b
                nbits -= b
            out[i] = s
    return out_arr


def sign_dot(const uint8_t[:, ::1] packed, const double[::1] v):
    cdef Py_ssize_t n = packed.shape[0], m = v.shape[0]
    cdef Py_ssize_t nbytes = (m + 7) // 8
    out_arr = np.zeros(n, dtype=np.float64)
    # per byte position, the signed sum for each of the 256 byte values;
    # bits past m contribute nothing
    table_arr = np.zeros((nbytes, 256), dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[:, ::1] table = table_arr
    cdef Py_ssize_t i, p, j, x, low
    cdef double s, w
    with nogil:
        for p in range(nbytes):
            s = 0.0
            for j in range(8):
                if 8 * p + j < m:
                    s -= v[8 * p + j]
            table[p, 0] = s
            for x in range(1, 256):
                low = 0
                while not (x >> low) & 1:
                    low += 1
                w = v[8 * p + low] if 8 * p + low < m else 0.0
                table[p, x] = table[p, x & (x - 1)] + 2.0 * w
        for i in range(n):
            s = 0.0
            for p in range(nbytes):
                s += table[p, packed[i, p]]
            out[i] = s
    return out_arr


cdef inline bint _worse(double sa, int64_t ia, double sb, int64_t ib) nogil:
    # a ranks below b: lower score, or equal score and larger id
    return sa < sb or (sa == sb and ia > ib)


cdef void _sift_down(double* hs, int64_t* hi, Py_ssize_t size, Py_ssize_t pos) nogil:
    cdef Py_ssize_t child, worst
    cdef double ts
    cdef int64_t ti
    while True:
        child = 2 * pos + 1
        if child >= size:
            return
        worst = child
        if child + 1 < size and _worse(hs[child + 1], hi[child + 1], hs[child], hi[child]):
            worst = child + 1
        if not _worse(hs[worst], hi[worst], hs[pos], hi[pos]):
            return
        ts = hs[pos]; hs[pos] = hs[worst]; hs[worst] = ts
        ti = hi[pos]; hi[pos] = hi[worst]; hi[worst] = ti
        pos = worst


def topk(const double[::1] scores, Py_ssize_t k):
    cdef Py_ssize_t n = scores.shape[0]
    if k > n:
        k = n
    if k <= 0:
        return np.zeros(0, dtype=np.int64)
    heap_s_arr = np.empty(k, dtype=np.float64)
    heap_i_arr = np.empty(k, dtype=np.int64)
    cdef double[::1] hs = heap_s_arr
    cdef int64_t[::1] hi = heap_i_arr
    cdef Py_ssize_t i, pos, parent, size = 0
    cdef double ts
    cdef int64_t ti
    with nogil:
        for i in range(n):
            if size < k:
                # push and sift up; root holds the worst kept element
                pos = size
                hs[pos] = scores[i]
                hi[pos] = i
                size += 1
                while pos > 0:
                    parent = (pos - 1) // 2
                    if _worse(hs[pos], hi[pos], hs[parent], hi[parent]):
                        ts = hs[pos]; hs[pos] = hs[parent]; hs[parent] = ts
                        ti = hi[pos]; hi[pos] = hi[parent]; hi[parent] = ti
                        pos = parent
                    else:
                        break
            elif _worse(hs[0], hi[0], scores[i], i):
                hs[0] = scores[i]
                hi[0] = i
                _sift_down(&hs[0], &hi[0], size, 0)
        # heap sort: repeatedly move the worst to the back
        while size > 1:
            ts = hs[0]; hs[0] = hs[size - 1]; hs[size - 1] = ts
            ti = hi[0]; hi[0] = hi[size - 1]; hi[size - 1] = ti
            size -= 1
            _sift_down(&hs[0], &hi[0], size, 0)
    return heap_i_arr
