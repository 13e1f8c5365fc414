#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy fallbacks.

Usage:  python benchmarks/bench_kernels.py [--repeats N]

The numba path must be active for a comparison (i.e. do not set
VQ3DKIT_DISABLE_NUMBA); otherwise only the fallback is timed.
"""

import argparse
import time

import numpy as np

from vq3dkit import kernels


def _best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_laplacian(repeats):
    print("laplacian_variance (per-frame blur scoring)")
    print(f"{'image':>12} {'numba':>12} {'numpy':>12} {'speedup':>9}")
    rng = np.random.default_rng(0)
    for h, w in ((240, 320), (480, 640), (1080, 1920)):
        img = rng.uniform(0, 1, size=(h, w))
        kernels.laplacian_variance(img)  # trigger JIT before timing
        t_fast = _best_of(lambda: kernels.laplacian_variance(img), repeats)
        t_np = _best_of(lambda: kernels.laplacian_variance_numpy(img), repeats)
        a = kernels.laplacian_variance(img)
        b = kernels.laplacian_variance_numpy(img)
        assert abs(a - b) < 1e-12, "paths disagree"
        label = "numba" if kernels.USING_NUMBA else "numpy"
        print(f"{h:>5}x{w:<6} {t_fast * 1e3:>10.3f}ms {t_np * 1e3:>10.3f}ms "
              f"{t_np / t_fast:>8.2f}x   ({label} active)")


def bench_candidate_scan(repeats):
    print("\ncandidate_alignment_errors (per-frame registration scan, O(F^2))")
    print(f"{'frames':>12} {'numba':>12} {'numpy':>12} {'speedup':>9}")
    rng = np.random.default_rng(1)
    for f in (50, 200, 800):
        q = rng.normal(size=(f, 4))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        q2 = rng.normal(size=(f, 4))
        q2 /= np.linalg.norm(q2, axis=1, keepdims=True)
        cc = rng.uniform(-5, 5, size=(f, 3))
        cm = rng.uniform(-5, 5, size=(f, 3))
        kernels.candidate_alignment_errors(cc, cm, q, q2, 1.0)
        t_fast = _best_of(lambda: kernels.candidate_alignment_errors(cc, cm, q, q2, 1.0), repeats)
        t_np = _best_of(
            lambda: kernels.candidate_alignment_errors_numpy(cc, cm, q, q2, 1.0), repeats
        )
        a = kernels.candidate_alignment_errors(cc, cm, q, q2, 1.0)
        b = kernels.candidate_alignment_errors_numpy(cc, cm, q, q2, 1.0)
        assert np.allclose(a, b, atol=1e-9), "paths disagree"
        print(f"{f:>12} {t_fast * 1e3:>10.3f}ms {t_np * 1e3:>10.3f}ms {t_np / t_fast:>8.2f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    if not kernels.USING_NUMBA:
        print("warning: numba path inactive (VQ3DKIT_DISABLE_NUMBA set or numba "
              "missing); both columns time the numpy fallback\n")
    bench_laplacian(args.repeats)
    bench_candidate_scan(args.repeats)


if __name__ == "__main__":
    main()
