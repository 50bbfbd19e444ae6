"""Compare the compiled and numpy operator kernels.

Usage::

    python3 benchmarks/bench_kernels.py --sizes 32,48,64 --repeat 5

Prints one row per grid size with the median time per operator
application, the speedup, and the largest difference between backends.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from afspin import datasets, kernels
from afspin.dirac import _problem, spin_connection
from afspin.grid import Grid


def _time(fn, repeat):
    fn()  # warm-up
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return statistics.median(out)


def run(sizes, repeat, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        grid = Grid.centered(n, 8.0)
        data = datasets.bowen_york(grid, (0.0, 0.0, 0.5), 1.0)
        prob = _problem(spin_connection(data))
        psi = rng.standard_normal((n ** 3, 4)) + 1j * rng.standard_normal((n ** 3, 4))
        args = (psi, prob.nodes, prob.coef, prob.strides, 1.0 / grid.spacing, prob.perm, prob.phase)
        t_np = _time(lambda: kernels.apply_operator(*args, backend="numpy"), repeat)
        row = {"n": n, "nodes": len(prob.nodes), "numpy_s": t_np, "cython_s": None, "speedup": None, "max_diff": None}
        try:
            t_cy = _time(lambda: kernels.apply_operator(*args, backend="cython"), repeat)
        except ImportError:
            pass
        else:
            a = kernels.apply_operator(*args, backend="numpy")
            b = kernels.apply_operator(*args, backend="cython")
            row.update(cython_s=t_cy, speedup=t_np / t_cy, max_diff=float(np.max(np.abs(a - b))))
        rows.append(row)
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="32,48,64")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    sizes = [int(s) for s in args.sizes.split(",")]
    print(f"default backend: {kernels.BACKEND}")
    print(f"{'n':>4} {'nodes':>9} {'numpy [ms]':>11} {'cython [ms]':>12} {'speedup':>8} {'max diff':>10}")
    for r in run(sizes, args.repeat):
        cy = f"{1e3 * r['cython_s']:12.2f}" if r["cython_s"] is not None else f"{'n/a':>12}"
        sp = f"{r['speedup']:8.1f}" if r["speedup"] is not None else f"{'n/a':>8}"
        md = f"{r['max_diff']:10.1e}" if r["max_diff"] is not None else f"{'n/a':>10}"
        print(f"{r['n']:4d} {r['nodes']:9d} {1e3 * r['numpy_s']:11.2f} {cy} {sp} {md}")


if __name__ == "__main__":
    main()
