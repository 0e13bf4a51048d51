"""Off-grid trigonometric evaluation: compiled kernel against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 64 128 256] [--repeat 3] [--csv out.csv]

For each grid size a random band-limited field is evaluated at the n^2 images
of a shear map (the workload of one composition). Reported: best wall time of
each backend, speed-up, and the max difference between the two results.
"""

import argparse
import csv
import sys
import time

import numpy as np

from paralab import spectral as sp
from paralab import trig


def workload(n, comps, seed=0):
    g = sp.Grid(n)
    rng = np.random.default_rng(seed)
    fields = [sp.random_field(g, rng, s=1.0) for _ in range(comps)]
    coeffs = np.stack([f.coeffs for f in fields])
    m = sp.extent(coeffs)
    tab = sp.centered_table(coeffs, m)
    x1, x2 = g.X
    x2 = x2 + 0.7 * np.sin(x1)
    return tab, g.scale, x1.ravel(), x2.ravel()


def best_of(fn, args, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--comps", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--csv")
    args = ap.parse_args(argv)

    kernels = trig.backends()
    if "compiled" not in kernels:
        print("compiled extension not importable; only the numpy path is timed")
    rows = []
    print(f"{'n':>5} {'numpy [s]':>11} {'compiled [s]':>13} {'speed-up':>9} {'max diff':>10}")
    for n in args.n:
        job = workload(n, args.comps)
        t_np, v_np = best_of(kernels["numpy"], job, args.repeat)
        if "compiled" in kernels:
            t_c, v_c = best_of(kernels["compiled"], job, args.repeat)
            diff = float(np.max(np.abs(v_c - v_np)))
        else:
            t_c, diff = float("nan"), float("nan")
        rows.append((n, t_np, t_c, t_np / t_c, diff))
        print(f"{n:>5} {t_np:>11.4f} {t_c:>13.4f} {t_np / t_c:>9.2f} {diff:>10.2e}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "numpy_s", "compiled_s", "speedup", "max_diff"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
