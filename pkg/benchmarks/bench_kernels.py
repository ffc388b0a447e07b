#!/usr/bin/env python
"""Time the hot kernels under both backends.

Compares the numba kernels with the numpy fallback on operator
application, forward and backward solves, and the Monte Carlo path sampler,
and reports the largest difference between the two backends' outputs.

Usage:
    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --sizes 256 1024 --repeat 5
    python benchmarks/bench_kernels.py --output bench.json
"""

import argparse
import json
import time

import numpy as np

from levy_mfg import _kernels, fp, hjb, sde_mc
from levy_mfg.grid_levy import Grid, LevyMeasureSpec, assemble_operator
from levy_mfg.hamiltonian import make_table1_pair


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(n):
    grid = Grid(n, T=0.5, n_t=50)
    op = assemble_operator(LevyMeasureSpec.stable(0.4), grid)
    rng = np.random.default_rng(0)
    phi = rng.standard_normal(n)
    b = fp.generate_drift(grid, 0.7, seed=1)
    m0 = rng.dirichlet(np.ones(n))
    prob = hjb.HjbProblem(op, make_table1_pair("d", q=2.0), np.cos(2 * np.pi * grid.x))
    atomic = assemble_operator(LevyMeasureSpec.atomic([(-0.25, 0.5), (0.25, 0.5)]), grid)
    return {
        "apply": lambda: op.apply(phi),
        "solve_fp": lambda: fp.solve_fp(b, m0, op).m,
        "solve_dual": lambda: fp.solve_dual(b, phi, op),
        "solve_hjb": lambda: hjb.solve_hjb(prob).u,
        "mc_paths": lambda: sde_mc.simulate_sde(atomic, np.ones(grid.shape), m0, 20000, seed=2).hist,
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[256, 1024])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--output", default=None, help="write results as JSON")
    args = parser.parse_args()

    if not _kernels.numba_available():
        print("numba is not importable; only the numpy backend can run")
        return

    rows = []
    for n in args.sizes:
        results = {}
        for name in ("numba", "numpy"):
            _kernels.set_backend(name)
            for label, fn in cases(n).items():
                fn()  # compile / warm caches
                results[(label, name)] = best_of(fn, args.repeat)
        for label in cases(n):
            t_nb, out_nb = results[(label, "numba")]
            t_np, out_np = results[(label, "numpy")]
            diff = float(np.max(np.abs(np.asarray(out_nb) - np.asarray(out_np))))
            rows.append({"n": n, "kernel": label, "numba_s": t_nb, "numpy_s": t_np,
                         "speedup": t_np / t_nb if t_nb > 0 else float("inf"), "max_abs_diff": diff})
    _kernels.set_backend("numba")

    print(f"{'n':>6} {'kernel':<11} {'numba [s]':>11} {'numpy [s]':>11} {'speedup':>8} {'max diff':>10}")
    for r in rows:
        print(f"{r['n']:>6} {r['kernel']:<11} {r['numba_s']:>11.5f} {r['numpy_s']:>11.5f} "
              f"{r['speedup']:>8.1f} {r['max_abs_diff']:>10.2e}")
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
