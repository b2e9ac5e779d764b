"""Compare the compiled and pure-numpy inner loops on the same problems.

Usage: python benchmarks/bench_core.py [--n 80] [--steps 20000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from kernelflow import _core_py
from kernelflow.data import gen_gauss_peak, standardize
from kernelflow.kernels import Kernel, KernelSpec, kernel_matrix, median_pairwise_distance

try:
    from kernelflow import _core as compiled
except ImportError:  # extension not built
    compiled = None

METHODS = {"kgd": 0, "ksgd": 1, "kcd": 2, "kegd": 3}


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def problem(n):
    d = standardize(gen_gauss_peak(n, 0))
    spec = KernelSpec(Kernel.GAUSSIAN, 0.1 * median_pairwise_distance(d.X))
    return kernel_matrix(spec, d.X, jitter=1e-6), d.y


def descent_case(core, K, y, code, steps):
    eta = 1e-3
    gamma = 0.5 if code == 3 else 0.0
    return lambda: core.descent_run(K, y, code, eta, gamma, 0.9, steps,
                                    np.array([steps], dtype=np.int64), 0.0, 1e300, 4096,
                                    core.new_state(y), 0)


def prox_case(core, K, y, code, iters):
    eta = 1.0 / np.linalg.eigvalsh(K)[-1]
    lam = 0.05 * (np.abs(y).max() if code == 0 else np.abs(y).sum())
    return lambda: core.prox_run(K, y, code, lam, eta, np.zeros_like(y), iters, 1e-300)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=80)
    parser.add_argument("--steps", type=int, default=20_000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if compiled is None:
        raise SystemExit("compiled extension not built; run pip install -e . first")
    K, y = problem(args.n)
    cases = [(f"descent {m}", descent_case, code, args.steps) for m, code in METHODS.items()]
    cases += [(f"prox {p}", prox_case, code, args.steps // 4)
              for p, code in (("l1", 0), ("linf", 1))]
    print(f"n = {args.n}, best of {args.repeat}")
    print(f"{'case':<14} {'iters':>7} {'python [s]':>11} {'cython [s]':>11} {'speedup':>8}")
    for name, build, code, iters in cases:
        slow = best_time(build(_core_py, K, y, code, iters), args.repeat)
        fast = best_time(build(compiled, K, y, code, iters), args.repeat)
        print(f"{name:<14} {iters:>7} {slow:>11.4f} {fast:>11.4f} {slow / fast:>7.1f}x")


if __name__ == "__main__":
    main()
