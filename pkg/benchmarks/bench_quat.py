"""Benchmark the compiled quaternion kernels against the numpy fallback.

Usage: python3 benchmarks/bench_quat.py [points]

The pointwise kernels sit in the inner loop of the gauge continuation
(between FFTs), so their throughput matters at larger grids.
"""

import sys
import time

import numpy as np

import chirality_lab.field_core as fc


def bench(label, fn, m, repeats=40):
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    elapsed = (time.perf_counter() - start) / repeats
    print(f"  {label:<12} {elapsed * 1e3:8.3f} ms   {m / elapsed / 1e6:8.1f} Mpts/s")
    return elapsed


def main():
    m = int(sys.argv[1]) if len(sys.argv) > 1 else 1 << 20
    rng = np.random.default_rng(0)
    a = rng.standard_normal((m, 4))
    b = rng.standard_normal((m, 4))
    u = a.copy()
    u[:, 0] = 0.0

    print(f"quaternion kernels on {m} points")
    cases = [
        ("mul", lambda: fc.qmul(a, b)),
        ("conj", lambda: fc.qconj(a)),
        ("inv", lambda: fc.qinv(a)),
        ("exp_pure", lambda: fc.qexp_pure(u)),
        ("normalize", lambda: fc.qnormalize(a)),
    ]

    if fc.HAVE_COMPILED_KERNELS:
        print("compiled kernels:")
        timings_fast = {name: bench(name, fn, m) for name, fn in cases}
        saved = fc._ext
        fc._ext = None
        try:
            print("numpy fallback:")
            timings_slow = {name: bench(name, fn, m) for name, fn in cases}
        finally:
            fc._ext = saved
        print("speedups:")
        for name in timings_fast:
            print(f"  {name:<12} x{timings_slow[name] / timings_fast[name]:.2f}")
        out = np.empty_like(a)
        check = np.max(np.abs(fc.qmul(a, b) - fc._qmul_np(a, b, out)))
        print(f"paths agree to {check:.2e}")
    else:
        print("compiled kernels unavailable; benchmarking the fallback only")
        for name, fn in cases:
            bench(name, fn, m)


if __name__ == "__main__":
    main()
