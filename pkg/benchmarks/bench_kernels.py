"""Compare the compiled and pure-Python kernel backends.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``. Each kernel is
checked for identical output before timing.
"""
import argparse
import timeit

import numpy as np

from anchored_transfer import _kernels


def _cases(rng):
    p = 8
    cdf = np.cumsum(rng.dirichlet(np.ones(p), size=p), axis=1)
    cdf[:, -1] = 1.0
    cdf = np.ascontiguousarray(cdf)
    u = rng.random(1_000_000)
    traj = np.ascontiguousarray(rng.integers(0, p, 1_000_000), dtype=np.int64)
    small = np.abs(rng.standard_normal(2500))
    large = np.abs(rng.standard_normal(1_000_000))
    return [
        ("simulate_chain  (1e6 steps, p=8)", "simulate_chain", (cdf, u, 0)),
        ("count_transitions (1e6 states)", "count_transitions", (traj, p)),
        ("topk_flat_indices (50x50, k=15)", "topk_flat_indices", (small, 15)),
        ("topk_flat_indices (1e6, k=100)", "topk_flat_indices", (large, 100)),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _kernels.compiled is None:
        raise SystemExit("compiled kernels are not built; reinstall with Cython available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'compiled ms':>12s} {'python ms':>12s} {'speedup':>9s}")
    for label, name, call_args in _cases(rng):
        fast = getattr(_kernels.compiled, name)
        slow = getattr(_kernels.pure, name)
        assert np.array_equal(fast(*call_args), slow(*call_args)), name
        number = 1 if "1e6" in label else 200
        t_fast = min(timeit.repeat(lambda: fast(*call_args), number=number, repeat=args.repeat)) / number
        t_slow = min(timeit.repeat(lambda: slow(*call_args), number=number, repeat=args.repeat)) / number
        print(f"{label:36s} {t_fast * 1e3:12.3f} {t_slow * 1e3:12.3f} {t_slow / t_fast:8.1f}x")


if __name__ == "__main__":
    main()
