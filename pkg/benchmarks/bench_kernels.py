"""Compiled kernels vs the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from mcvd import _fallback

try:
    from mcvd import _kernels
except ImportError:
    _kernels = None

UM = 1e-6
DRIFT = np.array([100.0, 200.0, 100.0]) * UM
OFFSETS = (np.array([100.0, 20.0, 40.0]) - np.array([[65.0, 20.0, 30.0], [60.0, 10.0, 30.0], [50.0, 10.0, 30.0]])) * UM
OMEGA, RADIUS = 4.5e-9, 45 * UM
T = np.array([1.2e-3, 1.5e-3, 1.576e-3])
A = np.array([200.0, 200.0, 200.0])


def cases(k):
    w = OFFSETS[2]
    return {
        "arrival_prob": lambda: k.arrival_prob(*w, *DRIFT, OMEGA, RADIUS, 2e-3),
        "arrival_prob_dt": lambda: k.arrival_prob_dt(*w, *DRIFT, OMEGA, RADIUS, 2e-3),
        "link_table U=3": lambda: k.link_table(T, A, OFFSETS, DRIFT, OMEGA, RADIUS, 3, True),
        "mean_ber U=3": lambda: k.mean_ber(T, A, OFFSETS, DRIFT, OMEGA, RADIUS, 3, True, 1e-12),
        "ml_threshold": lambda: k.ml_threshold(2.0, 8.0, 1.0, 4.0),
    }


def best_time(fn, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    py = cases(_fallback)
    cy = cases(_kernels) if _kernels is not None else {}
    print(f"{'kernel':<18}{'python (us)':>14}{'cython (us)':>14}{'speedup':>10}")
    for name, fn in py.items():
        tp = best_time(fn, args.repeat) * 1e6
        if name in cy:
            tc = best_time(cy[name], args.repeat) * 1e6
            print(f"{name:<18}{tp:>14.2f}{tc:>14.2f}{tp / tc:>9.1f}x")
        else:
            print(f"{name:<18}{tp:>14.2f}{'n/a':>14}{'':>10}")


if __name__ == "__main__":
    main()
