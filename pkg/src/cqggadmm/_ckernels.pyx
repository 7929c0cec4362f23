# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled codec hot loops. Bit-identical to ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint8_t, uint64_t
from libc.math cimport floor, fmax, fmin

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cpdef uint64_t stream_key(object seed, object stream, object counter):
    cdef uint64_t s = <uint64_t>(seed & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t w = <uint64_t>(stream & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t c = <uint64_t>(counter & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t h = mix64(s + GOLDEN)
    h = mix64(h ^ (w + GOLDEN))
    return mix64(h ^ (c + GOLDEN))


def counter_uniforms(seed, stream, counter, Py_ssize_t n):
    cdef uint64_t key = stream_key(seed, stream, counter)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] view = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            view[i] = <double>(mix64(key ^ (<uint64_t>i + GOLDEN)) >> 11) * (1.0 / 9007199254740992.0)
    return out


def stochastic_round(c, u, uint64_t levels):
    cdef double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t n = cv.shape[0], i
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] out = np.empty(n, dtype=np.uint64)
    cdef uint64_t[::1] ov = out
    cdef double x, lo, top = <double>levels
    with nogil:
        for i in range(n):
            x = fmin(fmax(cv[i], 0.0), top)
            lo = floor(x)
            # branchless: the comparison is a coin flip
            ov[i] = <uint64_t>lo + <uint64_t>(uv[i] < x - lo)
    return out


def pack_codes(codes, int bits):
    if not 1 <= bits <= 32:
        raise ValueError(f"bits must lie in [1, 32], got {bits}")
    cdef uint64_t[::1] cv = np.ascontiguousarray(codes, dtype=np.uint64)
    cdef Py_ssize_t d = cv.shape[0]
    cdef Py_ssize_t nbytes = (d * bits + 7) // 8
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] out = np.zeros(nbytes, dtype=np.uint8)
    cdef uint8_t[::1] ov = out
    cdef Py_ssize_t i, pos = 0
    cdef uint64_t acc = 0, mask = ((<uint64_t>1) << bits) - 1
    cdef int filled = 0
    with nogil:
        for i in range(d):
            # at most 7 bits pending plus 32 new ones
            acc |= (cv[i] & mask) << filled
            filled += bits
            while filled >= 8:
                ov[pos] = <uint8_t>(acc & 0xFF)
                pos += 1
                acc >>= 8
                filled -= 8
        if filled > 0:
            ov[pos] = <uint8_t>(acc & 0xFF)
    return out.tobytes()


def unpack_codes(const uint8_t[::1] buf, Py_ssize_t d, int bits):
    if not 1 <= bits <= 32:
        raise ValueError(f"bits must lie in [1, 32], got {bits}")
    if buf.shape[0] * 8 < d * bits:
        raise ValueError("buffer too short for the requested codes")
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] out = np.zeros(d, dtype=np.uint64)
    cdef uint64_t[::1] ov = out
    cdef Py_ssize_t i, pos = 0, nbytes = buf.shape[0]
    cdef uint64_t acc = 0, mask = ((<uint64_t>1) << bits) - 1
    cdef int filled = 0
    with nogil:
        for i in range(d):
            while filled < bits:
                acc |= (<uint64_t>buf[pos]) << filled
                pos += 1
                filled += 8
            ov[i] = acc & mask
            acc >>= bits
            filled -= bits
    return out
