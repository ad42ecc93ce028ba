"""Time the jitted grid kernels against their numpy reference.

Run:  python3 benchmarks/bench_kernels.py [--sizes 32,128,512,2048] [--q 2.0]

The jitted and numpy routes compute identical formulas; the max|diff|
column is a sanity check, not a tolerance. With DNEVOLVE_BACKEND=numpy
(or numba missing) only the reference timings are shown.
"""

import argparse
import timeit

import numpy as np

from dnevolve import _kernels


def best_time(fn, min_total=0.02, repeats=5):
    """Best per-call time: autorange the batch size, keep the fastest batch."""
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    number = max(number, int(min_total / max(timer.timeit(number=1), 1e-9)))
    return min(timer.repeat(repeat=repeats, number=number)) / number


def fmt(seconds):
    if seconds < 1e-6:
        return f"{seconds * 1e9:7.1f} ns"
    if seconds < 1e-3:
        return f"{seconds * 1e6:7.1f} us"
    return f"{seconds * 1e3:7.2f} ms"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="32,128,512,2048",
                    help="comma-separated grid sizes")
    ap.add_argument("--q", type=float, default=2.0,
                    help="gradient-term exponent (2.0 hits the linear path)")
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    print(f"backend: {_kernels.BACKEND} (numba available: {_kernels.HAS_NUMBA})")
    print(f"q = {args.q}")
    print()
    header = f"{'kernel':<10} {'N':>6} {'jitted':>11} {'numpy':>11} " \
             f"{'speedup':>8} {'max|diff|':>10}"
    print(header)
    print("-" * len(header))

    rng = np.random.default_rng(0)
    for n in sizes:
        u = rng.uniform(-1.2, 1.2, n)
        load = 0.2 * np.sin(np.pi * (np.arange(n) + 0.5) / n)
        dx = 1.0 / n
        pairs = [
            ("ac_energy", _kernels.ac_energy, _kernels.ac_energy_numpy),
            ("ac_grad", _kernels.ac_grad, _kernels.ac_grad_numpy),
        ]
        for name, fast, ref in pairs:
            ref_val = ref(u, dx, args.q, load)
            if _kernels.HAS_NUMBA:
                fast_val = fast(u, dx, args.q, load)  # also warms the jit
                diff = float(np.max(np.abs(np.asarray(fast_val)
                                           - np.asarray(ref_val))))
                t_fast = best_time(lambda: fast(u, dx, args.q, load))
                t_ref = best_time(lambda: ref(u, dx, args.q, load))
                print(f"{name:<10} {n:>6} {fmt(t_fast):>11} {fmt(t_ref):>11} "
                      f"{t_ref / t_fast:>7.1f}x {diff:>10.1e}")
            else:
                t_ref = best_time(lambda: ref(u, dx, args.q, load))
                print(f"{name:<10} {n:>6} {'-':>11} {fmt(t_ref):>11} "
                      f"{'-':>8} {'-':>10}")
    print()
    print("speedup = numpy time / jitted time, best of 5 batches each")


if __name__ == "__main__":
    main()
