"""Numeric kernel backend selection.

Prefers the compiled extension when it was built; falls back to the pure
Python implementation otherwise. COURSEPILOT_PURE_KERNELS=1 forces the
fallback (useful for the benchmark and for debugging).
"""

from __future__ import annotations

import os

from . import _pure

if os.environ.get("COURSEPILOT_PURE_KERNELS") == "1":
    _impl = _pure
    BACKEND = "pure"
else:
    try:
        from coursepilot import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _pure
        BACKEND = "pure"

hash_accumulate = _impl.hash_accumulate
l2_norm = _impl.l2_norm
dot = _impl.dot
dot_rows = _impl.dot_rows
row_norms = _impl.row_norms
softmax = _impl.softmax
top_p_prefix = _impl.top_p_prefix

__all__ = [
    "BACKEND",
    "hash_accumulate",
    "l2_norm",
    "dot",
    "dot_rows",
    "row_norms",
    "softmax",
    "top_p_prefix",
]
