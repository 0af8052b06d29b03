"""Benchmark the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]

Exercises the hot paths behind KB builds and retrieval: token-hash
embedding accumulation, row-wise similarity scans, softmax, and the top-p
prefix cut.
"""

from __future__ import annotations

import argparse
import random
import time

import numpy as np

from coursepilot.kernels import _pure

try:
    from coursepilot import _ckernels as compiled
except ImportError:
    compiled = None


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def build_workloads() -> dict:
    rng = random.Random(0)
    words = [f"tok{i}" for i in range(500)]
    tokens = [rng.choice(words) for _ in range(20_000)]

    nrng = np.random.RandomState(0)
    mat = nrng.standard_normal((2000, 512)).astype(np.float32)
    query = nrng.standard_normal(512).astype(np.float32)
    sims = nrng.standard_normal(4096)
    raw = nrng.rand(4096)
    probs = np.sort(raw / raw.sum())[::-1].copy()

    return {
        "hash_accumulate (20k tokens, 1024 dims)": lambda impl: impl.hash_accumulate(tokens, 1024, 42),
        "dot_rows (2000x512 f32)": lambda impl: impl.dot_rows(mat, query),
        "row_norms (2000x512 f32)": lambda impl: impl.row_norms(mat),
        "softmax (4096 values)": lambda impl: impl.softmax(sims, 0.1),
        "top_p_prefix (4096 probs)": lambda impl: impl.top_p_prefix(probs, 0.95),
    }


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    workloads = build_workloads()
    name_width = max(len(n) for n in workloads)
    print(f"{'workload':<{name_width}}  {'pure':>10}  {'compiled':>10}  {'speedup':>8}")
    for name, fn in workloads.items():
        pure_s = _time(lambda: fn(_pure), args.repeats)
        if compiled is None:
            print(f"{name:<{name_width}}  {pure_s * 1e3:>8.2f}ms  {'n/a':>10}  {'n/a':>8}")
            continue
        compiled_s = _time(lambda: fn(compiled), args.repeats)
        print(
            f"{name:<{name_width}}  {pure_s * 1e3:>8.2f}ms  {compiled_s * 1e3:>8.2f}ms"
            f"  {pure_s / compiled_s:>7.1f}x"
        )
    if compiled is None:
        print("\ncompiled extension not built; showing pure timings only")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
