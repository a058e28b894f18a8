#!/usr/bin/env python3
"""Time the pairwise match kernels: numba JIT vs pure numpy.

Generates random token sequences shaped like MBR candidate pools and
times :func:`nbestkit.kernels.pairwise_bleu_matches` under each backend.
The first numba call includes JIT compilation and is reported separately
as warmup.  Both backends are checked to produce identical matrices
before timing.

Run: python3 benchmarks/bench_kernels.py [--sizes 16,64,256] [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from nbestkit.kernels import pairwise_bleu_matches, resolve_backend
from nbestkit.rng import generator_for


def random_pool(n: int, rng, vocab: int = 200, mean_len: int = 20):
    lengths = rng.integers(max(2, mean_len // 2), mean_len * 2, size=n)
    return [
        [int(t) for t in rng.integers(0, vocab, size=length)] for length in lengths
    ]


def time_backend(pool, backend: str, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        pairwise_bleu_matches(pool, pool, backend=backend)
        best = min(best, time.perf_counter() - start)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="16,64,256", help="pool sizes, comma separated")
    parser.add_argument("--repeats", type=int, default=5, help="timed repeats (best kept)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    if resolve_backend("auto") != "numba":
        print("numba is not importable; only the numpy backend is timed")
        backends = ["numpy"]
    else:
        warm_pool = random_pool(4, generator_for(args.seed, 999))
        start = time.perf_counter()
        pairwise_bleu_matches(warm_pool, warm_pool, backend="numba")
        print(f"numba warmup (includes JIT compile): {time.perf_counter() - start:.2f}s")
        backends = ["numba", "numpy"]

    header = f"{'N':>6}  " + "".join(f"{b + ' (s)':>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for n in sizes:
        pool = random_pool(n, generator_for(args.seed, n))
        if len(backends) == 2:
            ref = pairwise_bleu_matches(pool, pool, backend="numpy")
            jit = pairwise_bleu_matches(pool, pool, backend="numba")
            if not np.array_equal(ref, jit):
                raise SystemExit(f"backend mismatch at N={n}")
        times = [time_backend(pool, b, args.repeats) for b in backends]
        row = f"{n:>6}  " + "".join(f"{t:>12.4f}" for t in times)
        if len(times) == 2:
            row += f"{times[1] / times[0]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
