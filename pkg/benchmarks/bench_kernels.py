#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the NumPy fallback.

Usage: python3 benchmarks/bench_kernels.py [--quick]

Covers the two hot paths: the Monte Carlo product sampler that dominates
the statistical-model workloads, and the digamma/trigamma scalars.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from stepgate.kernels import _fallback  # noqa: E402

try:
    from stepgate.kernels import _native
except ImportError:
    _native = None


def time_call(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_mc(quick: bool) -> None:
    cases = [
        (5.0, 5.0, 10, 100_000),
        (2.0, 2.0, 8, 100_000),
        (0.5, 0.5, 3, 100_000),
    ]
    if not quick:
        cases.append((5.0, 5.0, 10, 1_000_000))
    print(f"{'case':<28}{'numpy':>12}{'native':>12}{'speedup':>10}")
    for u, l, k, n in cases:
        label = f"mc_tsr(u={u:g}, l={l:g}, k={k}, n={n})"
        t_py = time_call(lambda: _fallback.mc_tsr_products(u, l, k, n, 1))
        if _native is None:
            print(f"{label:<28}{t_py * 1e3:>10.1f}ms{'-':>12}{'-':>10}")
            continue
        t_c = time_call(lambda: _native.mc_tsr_products(u, l, k, n, 1))
        print(f"{label:<28}{t_py * 1e3:>10.1f}ms{t_c * 1e3:>10.1f}ms{t_py / t_c:>9.2f}x")


def bench_special(quick: bool) -> None:
    n = 20_000 if quick else 200_000
    xs = [0.05 + 0.001 * (i % 50_000) for i in range(n)]

    def run(fn):
        def inner():
            for x in xs:
                fn(x)
        return inner

    for name in ("digamma", "trigamma"):
        label = f"{name} x{n}"
        t_py = time_call(run(getattr(_fallback, name)))
        if _native is None:
            print(f"{label:<28}{t_py * 1e3:>10.1f}ms{'-':>12}{'-':>10}")
            continue
        t_c = time_call(run(getattr(_native, name)))
        print(f"{label:<28}{t_py * 1e3:>10.1f}ms{t_c * 1e3:>10.1f}ms{t_py / t_c:>9.2f}x")


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="smaller sizes")
    args = parser.parse_args()
    if _native is None:
        print("compiled core not built (python setup.py build_ext --inplace); "
              "showing fallback timings only\n")
    bench_mc(args.quick)
    print()
    bench_special(args.quick)


if __name__ == "__main__":
    main()
