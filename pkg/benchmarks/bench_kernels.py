"""Time the compiled kernels against the numpy fallback on identical inputs.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--quick]

Each case checks that both backends return the same picks before timing.
"""

import argparse
import time

import numpy as np

from poolal import _pykernels
from poolal.linear import epsilon_linear

try:
    from poolal import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _linear_inputs(n, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    X *= rng.random(n)[:, None] ** (1.0 / d)
    X = np.ascontiguousarray(X)

    def fresh():
        return (X, np.eye(d), np.einsum("ij,ij->i", X, X), np.ones(n, dtype=np.uint8))

    return fresh


def _nl_inputs(n_groups, m, seed):
    rng = np.random.default_rng(seed)
    cols = np.ascontiguousarray(rng.random((n_groups, m)))
    members = np.arange(n_groups, dtype=np.int64)
    ptr = np.arange(n_groups + 1, dtype=np.int64)

    def fresh():
        return (cols, members, ptr, np.zeros(n_groups, dtype=np.int64), np.zeros((m, m)))

    return fresh


def _time(fn, make, eps, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        args = make()
        t0 = time.perf_counter()
        out = fn(*args, eps)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="small inputs only")
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not available; build it with "
              "'python3 setup.py build_ext --inplace'")
        return 1

    # thresholds of the first two linear stages at delta = 0.1
    lin = [(n, d, epsilon_linear(stage, n, 0.1))
           for n, d, stage in ([(2000, 5, 1), (8000, 5, 2)] if args.quick else
                               [(2000, 5, 1), (16_384, 5, 2), (65_536, 5, 2), (8000, 20, 1)])]
    nl = [(200, 10, 0.05)] if args.quick else [(400, 20, 0.05), (1000, 20, 0.02)]

    print(f"{'kernel':<14}{'size':>22}{'python s':>12}{'cython s':>12}{'speedup':>10}")
    for n, d, eps in lin:
        make = _linear_inputs(n, d, 0)
        tp, (pp, _) = _time(_pykernels.linear_greedy, make, eps, args.repeat)
        tc, (pc, _) = _time(_ckernels.linear_greedy, make, eps, args.repeat)
        assert np.array_equal(pp, pc), "backends disagree"
        print(f"{'linear_greedy':<14}{f'n={n} d={d} k={len(pp)}':>22}{tp:>12.4f}{tc:>12.4f}{tp / tc:>9.1f}x")
    for g, m, eps in nl:
        make = _nl_inputs(g, m, 1)
        tp, (pp, _) = _time(_pykernels.nl_greedy, make, eps, args.repeat)
        tc, (pc, _) = _time(_ckernels.nl_greedy, make, eps, args.repeat)
        assert np.array_equal(pp, pc), "backends disagree"
        print(f"{'nl_greedy':<14}{f'groups={g} |F|={m} k={len(pp)}':>22}{tp:>12.4f}{tc:>12.4f}{tp / tc:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
