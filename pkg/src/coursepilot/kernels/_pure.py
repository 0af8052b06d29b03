"""Pure-Python kernel fallback.

Mirrors ``coursepilot._ckernels`` operation for operation: same IEEE-754
double arithmetic in the same order, same libm calls, so both backends
produce bit-identical hash embeddings and matching scores. Keep the two
files in sync when changing any numeric path.
"""

from __future__ import annotations

import math

import numpy as np

_M64 = 0xFFFFFFFFFFFFFFFF
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_SIGN_SALT = 0xA5A5A5A5A5A5A5A5


def _splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def _fnv1a(data: bytes, seed: int) -> int:
    h = _FNV_OFFSET ^ _splitmix64(seed)
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _M64
    return h


def hash_accumulate(tokens, dims: int, seed: int) -> np.ndarray:
    """Signed token-hash histogram over ``dims`` buckets (unnormalized)."""
    buf = [0.0] * dims
    for token in tokens:
        h = _fnv1a(token.encode("utf-8"), seed)
        bucket = _splitmix64(h) % dims
        sign = 1.0 if _splitmix64(h ^ _SIGN_SALT) & 1 == 0 else -1.0
        buf[bucket] += sign
    return np.asarray(buf, dtype=np.float64)


def l2_norm(vec) -> float:
    acc = 0.0
    for x in np.asarray(vec, dtype=np.float64).tolist():
        acc += x * x
    return math.sqrt(acc)


def dot(a, b) -> float:
    xs = np.asarray(a, dtype=np.float64).tolist()
    ys = np.asarray(b, dtype=np.float64).tolist()
    acc = 0.0
    for x, y in zip(xs, ys):
        acc += x * y
    return acc


def dot_rows(mat, query) -> np.ndarray:
    """Row-wise dot products of a float32 matrix against a float32 vector."""
    q = np.asarray(query, dtype=np.float32).astype(np.float64).tolist()
    out = []
    for row in np.asarray(mat, dtype=np.float32).astype(np.float64).tolist():
        acc = 0.0
        for x, y in zip(row, q):
            acc += x * y
        out.append(acc)
    return np.asarray(out, dtype=np.float64)


def row_norms(mat) -> np.ndarray:
    out = []
    for row in np.asarray(mat, dtype=np.float32).astype(np.float64).tolist():
        acc = 0.0
        for x in row:
            acc += x * x
        out.append(math.sqrt(acc))
    return np.asarray(out, dtype=np.float64)


def softmax(vals, temperature: float) -> np.ndarray:
    """Max-subtracted softmax of ``vals / temperature``."""
    scaled = [v / temperature for v in np.asarray(vals, dtype=np.float64).tolist()]
    if not scaled:
        return np.empty(0, dtype=np.float64)
    m = scaled[0]
    for v in scaled[1:]:
        if v > m:
            m = v
    exps = [math.exp(v - m) for v in scaled]
    total = 0.0
    for e in exps:
        total += e
    return np.asarray([e / total for e in exps], dtype=np.float64)


def top_p_prefix(probs_desc, p: float) -> int:
    """Length of the smallest prefix with cumulative mass >= p (never 0)."""
    xs = np.asarray(probs_desc, dtype=np.float64).tolist()
    cum = 0.0
    for i, x in enumerate(xs):
        cum += x
        if cum >= p:
            return i + 1
    return len(xs)
