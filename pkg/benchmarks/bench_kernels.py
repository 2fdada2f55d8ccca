"""Compare the compiled and numpy energy/gradient kernels.

    python benchmarks/bench_kernels.py [--sizes 512,2048,8192] [--repeat 7]

Prints per-call times for each backend, the speedup, and the largest
relative disagreement between the two on the same input.  A final row
times a full continuation solve under each backend (run in a subprocess
so the backend is picked at import, as in normal use).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from qnorm import kernels
from qnorm import nonlinearity as nl
from qnorm.grid import make_grid

CASES = [
    ("log eps=2^-8", nl.log_nonlinearity(3, 1.8), 2.0 ** -8),
    ("log-power mu=-0.2 p=4", nl.NonlinearitySpec("log_power", 3, 1.8, alpha=1.0, mu=-0.2,
                                                  p=4.0), 0.05),
    ("pure p=3.1", nl.NonlinearitySpec("pure_power", 3, 1.8, mu=1.0, p=3.1), None),
]

SOLVE = """
import time
from qnorm import kernels, nonlinearity as nl, solver as sv
from qnorm.grid import make_grid
t = time.perf_counter()
sv.continuation_solve(30.0, nl.log_nonlinearity(3, 1.8), sv.SolverConfig(), make_grid(3, 16.0, {n}))
print(kernels.BACKEND, time.perf_counter() - t)
"""


def field(grid):
    rng = np.random.default_rng(0)
    u = 3.0 * np.exp(-0.5 * (grid.nodes / 2.0) ** 2) + 0.1 * rng.standard_normal(grid.n)
    u[-1] = 0.0
    return u


def bench_kernel(sizes, repeat):
    print(f"{'case':<24}{'n':>7}{'numpy ms':>11}{'cython ms':>11}{'speedup':>9}{'max rel diff':>14}")
    for label, spec, eps in CASES:
        for n in sizes:
            g = make_grid(3, 16.0, n)
            u = field(g)
            t = {}
            for b in ("numpy", "cython"):
                call = lambda: kernels.evaluate(u, g, spec, eps, True, 1e-8, True, backend=b)
                loops = max(1, int(2e5 // n))
                t[b] = min(timeit.repeat(call, number=loops, repeat=repeat)) / loops * 1e3
            a = kernels.evaluate(u, g, spec, eps, True, 1e-8, True, backend="numpy")
            c = kernels.evaluate(u, g, spec, eps, True, 1e-8, True, backend="cython")
            diff = max(abs(x - y) / max(abs(x), 1e-300) for x, y in zip(a[:4], c[:4]))
            diff = max(diff, float(np.max(np.abs(a[4] - c[4])) / np.max(np.abs(a[4]))))
            print(f"{label:<24}{n:>7}{t['numpy']:>11.3f}{t['cython']:>11.3f}"
                  f"{t['numpy'] / t['cython']:>9.1f}{diff:>14.1e}")


def bench_solve(n):
    for b in ("numpy", "cython"):
        env = dict(os.environ, QNORM_BACKEND=b)
        out = subprocess.run([sys.executable, "-c", SOLVE.format(n=n)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"continuation solve c=30, n={n}, backend {out[0]}: {float(out[1]):.3f} s")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="512,2048,8192")
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--solve-n", type=int, default=2048)
    args = ap.parse_args()
    if not kernels.HAVE_COMPILED:
        sys.exit("compiled kernel not built; run pip install -e . --no-build-isolation")
    bench_kernel([int(s) for s in args.sizes.split(",")], args.repeat)
    bench_solve(args.solve_n)


if __name__ == "__main__":
    main()
