"""Benchmark the jitted kernels against their pure-numpy twins.

Usage: python benchmarks/bench_kernels.py [--n 1000] [--m 1001] [--repeats 5]

Reports the best-of-N wall time per implementation and the speedup of
the numba path.  The numpy column is what the package falls back to
when GSDA_DISABLE_NUMBA=1 is set (or numba is not installed).
"""

import argparse
import time

import numpy as np

from gsda import _kernels


def best_time(fn, args, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def make_cases(n, m, rng):
    q = rng.normal(size=n)
    y_q = rng.normal(size=n)
    u_q = rng.uniform(-1.0, 1.0, size=(m, n))
    eta = rng.normal(size=n) * 0.3
    kappa = rng.uniform(-0.1, 0.5, n)
    y_g = rng.uniform(0.05, 2.0, n) * np.exp(eta)
    u_g = rng.uniform(-1.0, 1.0, size=(m, 2 * n))
    w = np.sort(rng.uniform(0.0, 1.0, n))
    return {
        "pinball_sampled_grad_sum": (q, y_q, 0.9, 0.05, u_q),
        "gpd_sampled_grad_sum": (eta, kappa, y_g, 0.02, u_g),
        "gpd_grad": (eta, kappa, y_g),
        "ll_weights": (w, 0.1, w),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=1000, help="observations")
    parser.add_argument("--m", type=int, default=1001, help="sampled directions")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    cases = make_cases(args.n, args.m, np.random.default_rng(0))
    have_numba = "numba" in _kernels.IMPLS
    if not have_numba:
        print("numba path unavailable (not installed or disabled); "
              "timing numpy only")
    print(f"n={args.n} m={args.m} repeats={args.repeats} "
          f"(active path: {_kernels.ACTIVE})\n")
    header = f"{'kernel':<28}{'numpy':>12}{'numba':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, call_args in cases.items():
        t_np = best_time(_kernels.IMPLS["numpy"][name], call_args, args.repeats)
        if have_numba:
            fn = _kernels.IMPLS["numba"][name]
            fn(*call_args)  # compile outside the timed region
            t_nb = best_time(fn, call_args, args.repeats)
            print(f"{name:<28}{t_np * 1e3:>10.2f}ms{t_nb * 1e3:>10.2f}ms"
                  f"{t_np / t_nb:>9.1f}x")
        else:
            print(f"{name:<28}{t_np * 1e3:>10.2f}ms{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
