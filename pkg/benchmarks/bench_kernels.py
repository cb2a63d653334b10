"""Time the compiled nearest-neighbour kernel against its numpy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 1000 10000 100000] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from poseforecast import _nnkernel_py, kernels


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[1000, 10000, 100000])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"compiled backend: {kernels.BACKEND}")
    if kernels.BACKEND != "cython":
        print("extension not built; only the fallback is timed")
    rng = np.random.default_rng(0)
    q = rng.normal(size=(13, 2))
    qv = rng.random(13) > 0.2
    print(f"{'candidates':>10} {'compiled ms':>12} {'numpy ms':>10} {'speedup':>8}")
    for m in args.sizes:
        c = rng.normal(size=(m, 13, 2))
        cv = rng.random((m, 13)) > 0.3
        allowed = rng.random(m) > 0.5
        number = max(1, 200000 // m)

        def run(impl):
            return min(timeit.repeat(lambda: kernels.nearest(q, qv, c, cv, allowed, impl=impl),
                                     number=number, repeat=args.repeat)) / number * 1e3

        slow = run(_nnkernel_py)
        if kernels.BACKEND == "cython":
            assert kernels.nearest(q, qv, c, cv, allowed) == kernels.nearest(q, qv, c, cv, allowed, impl=_nnkernel_py)
            fast = run(None)
            print(f"{m:>10} {fast:>12.3f} {slow:>10.3f} {slow / fast:>7.1f}x")
        else:
            print(f"{m:>10} {'-':>12} {slow:>10.3f} {'-':>8}")


if __name__ == "__main__":
    main()
