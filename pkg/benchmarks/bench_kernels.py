"""Compare the numba and numpy kernel flavours on batched contact extraction.

Run with ``python3 benchmarks/bench_kernels.py``.  Both flavours are taken
from ``gapcount.kernels.IMPLEMENTATIONS`` directly, so the environment flag
does not matter here.  When numba is missing the "numba" entries are the
plain-Python loops and the comparison shows how slow those are.
"""
import argparse
import time

import numpy as np

from gapcount import kernels

EPS = 1e-6
MERGE = 1e-12


def make_batch(rng, rows, n):
    lengths = rng.integers(max(2, n // 2), n + 1, size=rows)
    offsets = np.concatenate(([0], np.cumsum(lengths))).astype(np.int64)
    flat = rng.standard_normal(int(offsets[-1])) * 3.0
    return flat, offsets


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    print(f"numba available: {kernels.HAVE_NUMBA}; active backend: {kernels.BACKEND}")
    print(f"{'rows':>7} {'n':>7} {'numpy [s]':>11} {'numba [s]':>11} {'speedup':>8}")
    for rows, n in [(20000, 64), (5000, 1024), (200, 65536), (4, 2 ** 20)]:
        flat, offsets = make_batch(rng, rows, n)
        call = (flat, offsets, EPS, 0.0, MERGE)
        ref = kernels.IMPLEMENTATIONS["numpy"]["rows_contact"](*call)
        got = kernels.IMPLEMENTATIONS["numba"]["rows_contact"](*call)  # also compiles
        for a, b in zip(ref, got):
            np.testing.assert_allclose(a, b, rtol=1e-13)
        t_np = best_of(kernels.IMPLEMENTATIONS["numpy"]["rows_contact"], call, args.repeat)
        t_nb = best_of(kernels.IMPLEMENTATIONS["numba"]["rows_contact"], call, args.repeat)
        print(f"{rows:>7} {n:>7} {t_np:>11.4f} {t_nb:>11.4f} {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
