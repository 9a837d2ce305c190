"""Compare the numba and numpy kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py [--reps 200] [--repeat 3]

Both backends are loaded in-process through the ``backend`` argument of the
kernel wrappers, so one run times both and checks they agree bit for bit.
"""

import argparse
import time

import numpy as np

from parsel._accel import HAVE_NUMBA
from parsel.kernels import flowline_batch, uniforms
from parsel.rng import stream_key


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--reps", type=int, default=200, help="flow-line replications per timing")
    p.add_argument("--draws", type=int, default=2_000_000, help="uniforms per timing")
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    key = stream_key(1, 7, 1)
    warm = np.full(args.reps, 2000, dtype=np.int64)
    cases = {
        "uniforms": lambda b: uniforms(key, 0, np.full(args.draws // 1000, 1000), backend=b),
        "flowline_batch": lambda b: flowline_batch(key, 0, args.reps, (7, 6, 7), (10, 10), warm, 50, backend=b),
    }
    print(f"{'kernel':<16}{'backend':<9}{'seconds':>10}{'speed-up':>10}")
    for name, fn in cases.items():
        results = {}
        for b in backends:
            fn(b)  # compile / warm caches
            results[b] = best_of(lambda: fn(b), args.repeat)
        base = results["numpy"][0]
        for b, (sec, _) in results.items():
            print(f"{name:<16}{b:<9}{sec:>10.4f}{base / sec:>10.2f}")
        if len(results) == 2:
            same = np.array_equal(results["numpy"][1], results["numba"][1])
            print(f"{'':<16}bit-identical: {same}")


if __name__ == "__main__":
    main()
