"""Time the numba and numpy loss kernels on the same ragged batches.

    python benchmarks/bench_kernels.py [--queries 256] [--repeat 20]

Prints one row per loss kind with the best-of-repeat wall time per batch for
each backend, the speedup, and the max absolute difference between them.
"""

import argparse
import time

import numpy as np

from abductrank import kernels
from abductrank.losses import LOSS_KINDS, LossSpec


def make_batch(n_queries, rng, lo=4, hi=16, pairs_only=False):
    sizes = np.full(n_queries, 2) if pairs_only else rng.integers(lo, hi + 1, n_queries)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    labels = np.empty(offsets[-1])
    for q in range(n_queries):
        a, b = offsets[q], offsets[q + 1]
        while True:
            y = rng.integers(0, 4, b - a) / 3.0
            if np.ptp(y) > 0 and (not pairs_only or y[0] != y[1]):
                break
        labels[a:b] = y
    return labels, rng.normal(0.0, 2.0, offsets[-1]), offsets


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--queries", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    def fast(*a):
        return kernels.batch_loss(*a, backend="numba")

    def slow(*a):
        return kernels.batch_loss(*a, backend="numpy")

    rng = np.random.default_rng(args.seed)
    print(f"{'loss':<22} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8} {'max diff':>10}")
    for kind in LOSS_KINDS:
        spec = LossSpec(kind)
        y, s, off = make_batch(args.queries, rng, pairs_only=(kind == "binary_classification"))
        code, opt = spec.kernel_code, spec.kernel_option
        fast(code, y, s, off, opt)  # compile outside the timing
        tf = best_time(lambda: fast(code, y, s, off, opt), args.repeat)
        tn = best_time(lambda: slow(code, y, s, off, opt), args.repeat)
        vf, gf = fast(code, y, s, off, opt)
        vn, gn = slow(code, y, s, off, opt)
        diff = max(np.abs(vf - vn).max(), np.abs(gf - gn).max())
        print(f"{kind:<22} {tf * 1e3:>10.3f} {tn * 1e3:>10.3f} {tn / tf:>7.1f}x {diff:>10.2e}")


if __name__ == "__main__":
    main()
