"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from sfflab import kernels
from sfflab.models import sector_basis


def cases(rng):
    basis = sector_basis(12, 0)
    L = 12
    bi = np.arange(L, dtype=np.int64)
    bj = (bi + 1) % L
    hz = rng.uniform(-3, 3, L)
    yield "xxz_matrix L=12", (basis.states, basis.lookup, bi, bj, np.ones(L), np.ones(L), hz,
                              np.zeros(L))
    e = np.sort(rng.normal(size=924))
    yield "filtered_trace 924x200", (e, rng.random(924), np.geomspace(0.1, 1e3, 200))
    yield "prep_accept 2e5x5", (rng.normal(size=200_000), rng.random((200_000, 5)), 0.3)
    n = 400_000
    yield "shot_tally 4e5 slots", (rng.uniform(0, 6.3, n), rng.integers(0, 2, n),
                                   rng.integers(0, 60, n), rng.random(n), 60)


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, a in cases(rng):
        short = name.split()[0]
        fast = getattr(kernels, f"{short}_loop")
        slow = getattr(kernels, f"{short}_np")
        fast(*a)  # compile
        tf, ts = best_of(fast, a, args.repeat), best_of(slow, a, args.repeat)
        print(f"{name:28s} {tf * 1e3:10.2f} {ts * 1e3:10.2f} {ts / tf:8.1f}")


if __name__ == "__main__":
    main()
