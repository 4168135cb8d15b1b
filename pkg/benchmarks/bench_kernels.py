"""Compare the compiled distance kernel against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 262144] [--d 1,2,8] [--l 1024] [--repeat 7]

For each dimension and metric it prints the best time of each backend for
the distance kernel alone and for a machine's full local step (distances
plus truncation to the l closest keys), with the speedup.  Outputs of both
backends are checked to be identical first.
"""
import argparse
import sys
import timeit

import numpy as np

from dknn import _kernels_py
from dknn.core import COORD_LIMIT, Metric
from dknn.kernels import smallest_keys

try:
    from dknn import _kernels
except ImportError:
    _kernels = None


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=2**18)
    p.add_argument("--d", default="1,2,8")
    p.add_argument("--l", type=int, default=1024)
    p.add_argument("--repeat", type=int, default=7)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1

    rng = np.random.default_rng(args.seed)
    ids = rng.permutation(args.n * 4)[:args.n].astype(np.int64)
    print(f"n={args.n} l={args.l}")
    print(f"{'step':<10}{'metric':>7}{'d':>3}{'compiled ms':>13}{'numpy ms':>11}{'speedup':>9}")
    for d in (int(x) for x in args.d.split(",")):
        coords = rng.integers(0, COORD_LIMIT, size=(args.n, d))
        query = rng.integers(0, COORD_LIMIT, size=d)
        for metric in Metric:
            code = int(metric)
            fast_dist = _kernels.distance_keys(coords, query, code)
            assert np.array_equal(fast_dist, _kernels_py.distance_keys(coords, query, code))

            def local_step(impl):
                return smallest_keys(impl.distance_keys(coords, query, code), ids, args.l)

            steps = [
                ("distance", lambda impl: impl.distance_keys(coords, query, code)),
                ("local", local_step),
            ]
            for name, call in steps:
                fast = best(lambda: call(_kernels), args.repeat)
                slow = best(lambda: call(_kernels_py), args.repeat)
                print(f"{name:<10}{metric.label:>7}{d:>3}{fast * 1e3:>13.2f}{slow * 1e3:>11.2f}"
                      f"{slow / fast:>8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
