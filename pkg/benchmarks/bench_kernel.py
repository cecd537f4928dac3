"""Benchmark the compiled power-game round against the pure-Python twin.

Usage: python benchmarks/bench_kernel.py

The two implementations share their arithmetic operation for operation, so
this is a pure speed comparison; the script also asserts the trajectories
stay bitwise identical.
"""

import time

import numpy as np

from backhaulsim import _powergame_py

try:
    from backhaulsim import _powergame_core
except ImportError:
    _powergame_core = None


def make_problem(n, seed):
    rng = np.random.default_rng(seed)
    gains = rng.uniform(0.001, 0.01, (n, n)) / n
    np.fill_diagonal(gains, rng.uniform(2.0, 6.0, n))
    noise = rng.uniform(0.5, 2.0, n)
    target = np.full(n, 100.0)
    p_max = np.full(n, 1e4)
    order = np.arange(n, dtype=np.intp)
    return gains, noise, target, p_max, order


def run(fn, args, rounds):
    gains, noise, target, p_max, order = args
    p = np.full(len(noise), 1e-3)
    t0 = time.perf_counter()
    for _ in range(rounds):
        fn(gains, noise, target, p, p_max, order)
    return time.perf_counter() - t0, p


def main():
    rounds = 2000
    print(f"{'N':>4} {'python (ms)':>12} {'cython (ms)':>12} {'speedup':>8}")
    for n in (4, 8, 16, 32, 64):
        args = make_problem(n, seed=n)
        t_py, p_py = run(_powergame_py.sinr_round, args, rounds)
        if _powergame_core is None:
            print(f"{n:>4} {t_py * 1e3:>12.2f} {'not built':>12} {'-':>8}")
            continue
        t_cy, p_cy = run(_powergame_core.sinr_round, args, rounds)
        assert np.array_equal(p_py, p_cy), "backends diverged"
        print(f"{n:>4} {t_py * 1e3:>12.2f} {t_cy * 1e3:>12.2f} "
              f"{t_py / t_cy:>8.1f}x")


if __name__ == "__main__":
    main()
