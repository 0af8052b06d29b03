# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot-path kernels.

Numerically interchangeable with ``coursepilot.kernels._pure``: identical
operations in identical order so hash embeddings are bit-equal across
backends. Keep in sync with the pure module.
"""

from libc.math cimport exp, sqrt

import numpy as np

ctypedef unsigned long long u64

cdef u64 _FNV_OFFSET = 0xCBF29CE484222325ULL
cdef u64 _FNV_PRIME = 0x100000001B3ULL
cdef u64 _SIGN_SALT = 0xA5A5A5A5A5A5A5A5ULL


cdef inline u64 _splitmix64(u64 x):
    cdef u64 z = x + 0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline u64 _fnv1a(const unsigned char[:] data, u64 seed):
    cdef u64 h = _FNV_OFFSET ^ _splitmix64(seed)
    cdef Py_ssize_t i
    for i in range(data.shape[0]):
        h = (h ^ <u64>data[i]) * _FNV_PRIME
    return h


def hash_accumulate(tokens, int dims, seed) -> np.ndarray:
    """Signed token-hash histogram over ``dims`` buckets (unnormalized)."""
    out = np.zeros(dims, dtype=np.float64)
    cdef double[::1] buf = out
    cdef u64 useed = <u64>seed
    cdef u64 h
    cdef Py_ssize_t bucket
    cdef double sign
    for token in tokens:
        data = token.encode("utf-8")
        h = _fnv1a(data, useed)
        bucket = <Py_ssize_t>(_splitmix64(h) % <u64>dims)
        sign = 1.0 if (_splitmix64(h ^ _SIGN_SALT) & 1ULL) == 0 else -1.0
        buf[bucket] += sign
    return out


def l2_norm(vec) -> float:
    cdef double[::1] v = np.ascontiguousarray(vec, dtype=np.float64)
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(v.shape[0]):
        acc += v[i] * v[i]
    return sqrt(acc)


def dot(a, b) -> float:
    cdef double[::1] x = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[::1] y = np.ascontiguousarray(b, dtype=np.float64)
    cdef double acc = 0.0
    cdef Py_ssize_t i, n = min(x.shape[0], y.shape[0])
    for i in range(n):
        acc += x[i] * y[i]
    return acc


def dot_rows(mat, query) -> np.ndarray:
    """Row-wise dot products of a float32 matrix against a float32 vector."""
    cdef const float[:, ::1] m = np.ascontiguousarray(mat, dtype=np.float32)
    cdef const float[::1] q = np.ascontiguousarray(query, dtype=np.float32)
    out = np.empty(m.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef double acc
    cdef Py_ssize_t i, j
    for i in range(m.shape[0]):
        acc = 0.0
        for j in range(m.shape[1]):
            acc += (<double>m[i, j]) * (<double>q[j])
        o[i] = acc
    return out


def row_norms(mat) -> np.ndarray:
    cdef const float[:, ::1] m = np.ascontiguousarray(mat, dtype=np.float32)
    out = np.empty(m.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef double acc
    cdef Py_ssize_t i, j
    for i in range(m.shape[0]):
        acc = 0.0
        for j in range(m.shape[1]):
            acc += (<double>m[i, j]) * (<double>m[i, j])
        o[i] = sqrt(acc)
    return out


def softmax(vals, double temperature) -> np.ndarray:
    """Max-subtracted softmax of ``vals / temperature``."""
    cdef double[::1] v = np.ascontiguousarray(vals, dtype=np.float64)
    cdef Py_ssize_t i, n = v.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double m, total
    if n == 0:
        return out
    for i in range(n):
        o[i] = v[i] / temperature
    m = o[0]
    for i in range(1, n):
        if o[i] > m:
            m = o[i]
    total = 0.0
    for i in range(n):
        o[i] = exp(o[i] - m)
        total += o[i]
    for i in range(n):
        o[i] = o[i] / total
    return out


def top_p_prefix(probs_desc, double p) -> int:
    """Length of the smallest prefix with cumulative mass >= p (never 0)."""
    cdef double[::1] xs = np.ascontiguousarray(probs_desc, dtype=np.float64)
    cdef double cum = 0.0
    cdef Py_ssize_t i
    for i in range(xs.shape[0]):
        cum += xs[i]
        if cum >= p:
            return i + 1
    return xs.shape[0]
