"""Time the compiled kernels against the pure-Python fallback.

Usage::

    python benchmarks/bench_kernels.py [--seeds 2000] [--t-end 200] [--repeat 3]
"""

import argparse
import time

import numpy as np

from coinfect import canonical_params
from coinfect.equilibria import derived_quantities
from coinfect.kernels import backends
from coinfect.oracle import sobol_seeds


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=2000, help="Newton seeds per batch")
    ap.add_argument("--t-end", type=float, default=200.0, help="integration horizon")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    p0 = canonical_params()
    p = p0.with_K(2 * derived_quantities(p0).K(5))
    vec = p.to_vector()
    seeds = sobol_seeds(p, args.seeds)
    x0 = np.array([p.K, 0.01, 0.01, 0.01, 0.0])

    tasks = {
        "newton_batch": lambda m: m.newton_batch(vec, seeds, 1e-13, 100, False),
        "dopri5": lambda m: m.dopri5(vec, x0, 0.0, args.t_end, 1e-10, 1e-12, 0.0, 0.0, 2_000_000),
    }
    mods = backends()
    if "cython" not in mods:
        print("compiled backend unavailable; timing the Python fallback only")
    print(f"{'kernel':<14}{'backend':<10}{'seconds':>12}")
    results = {}
    for name, task in tasks.items():
        for bname, mod in mods.items():
            results[name, bname] = best_of(lambda: task(mod), args.repeat)
            print(f"{name:<14}{bname:<10}{results[name, bname]:>12.4f}")
    if "cython" in mods:
        print()
        for name in tasks:
            print(f"{name} speedup: {results[name, 'python'] / results[name, 'cython']:.1f}x")


if __name__ == "__main__":
    main()
