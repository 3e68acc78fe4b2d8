"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from dualflow import kernels
from dualflow.noise import NoiseStream

KEY = 0x243F6A8885A308D3


def cases():
    s = NoiseStream(0)
    a, b = s.normal(0, (2000, 2)), s.normal(1, (2000, 2))
    imgs = s.uniform(2, (64, 16, 16))
    return {
        "counter_normals n=1e6": (lambda: kernels.counter_normals_numba(KEY, 0, 1_000_000),
                                  lambda: kernels.counter_normals_numpy(KEY, 0, 1_000_000)),
        "mean_pairwise 2000x2000": (lambda: kernels.mean_pairwise_distance_numba(a, b),
                                    lambda: kernels.mean_pairwise_distance_numpy(a, b)),
        "block_stats 64 imgs cell 2": (lambda: kernels.block_stats_numba(imgs, 2),
                                       lambda: kernels.block_stats_numpy(imgs, 2)),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    print(f"{'kernel':<28s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, (fast, slow) in cases().items():
        r_fast, r_slow = fast(), slow()  # warm-up also compiles
        same = all(np.allclose(x, y, rtol=1e-12, atol=1e-14)
                   for x, y in zip(np.atleast_1d(r_fast), np.atleast_1d(r_slow)))
        t_fast = min(timeit.repeat(fast, number=1, repeat=args.repeat)) * 1e3
        t_slow = min(timeit.repeat(slow, number=1, repeat=args.repeat)) * 1e3
        flag = "" if same else "  MISMATCH"
        print(f"{name:<28s} {t_fast:10.2f} {t_slow:10.2f} {t_slow / t_fast:7.1f}x{flag}")


if __name__ == "__main__":
    main()
