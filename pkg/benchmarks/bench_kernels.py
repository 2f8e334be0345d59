"""Time the edge kernels with numba against their numpy twins.

    python benchmarks/bench_kernels.py [--h 0.1] [--repeat 5]

Builds the discretization of the two-gap, k = 1 seed on a ball of radius
24, checks that both backends agree, and prints the best-of-``repeat``
wall time of each kernel.
"""

import argparse
import time

import numpy as np

from axiharm import kernels
from axiharm.discretization import Discretization, Grid
from axiharm.rods import RodConfig, SingularMapSpec
from axiharm.seed import build_seed


def best_time(fn, repeat):
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return min(out)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--h", type=float, default=0.1)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rods = RodConfig([(-3.0, -1.0), (1.0, 3.0)])
    spec = SingularMapSpec(np.array([0.3, -0.2, 0.5]), np.array([[0.2], [-0.4], [0.1]]))
    seed = build_seed(rods, spec)
    grid = Grid.build(rods, 24.0, args.h, 1.15, min_gap_cells=4)
    disc = Discretization(grid, seed, 1)
    X = disc.flat(disc.initial(None))
    ea, eb, wU, kA, kB = disc.ea, disc.eb, disc.wU, disc.kA, disc.kB
    print(f"grid {grid.shape}, {ea.size} edges, m = {X.shape[0]}")

    rows = []
    for name, fn in (("edge_energy", kernels.edge_energy), ("gradient", kernels.gradient),
                     ("edge_hessian", kernels.edge_hessian)):
        a = fn(X, ea, eb, wU, kA, kB, use_numba=True)          # also compiles
        b = fn(X, ea, eb, wU, kA, kB, use_numba=False)
        gap = float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))
        t_nb = best_time(lambda: fn(X, ea, eb, wU, kA, kB, use_numba=True), args.repeat)
        t_np = best_time(lambda: fn(X, ea, eb, wU, kA, kB, use_numba=False), args.repeat)
        rows.append((name, t_nb, t_np, gap))

    print(f"{'kernel':<14}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}{'rel. gap':>12}")
    for name, t_nb, t_np, gap in rows:
        print(f"{name:<14}{1e3 * t_nb:>12.2f}{1e3 * t_np:>12.2f}{t_np / t_nb:>10.1f}{gap:>12.1e}")


if __name__ == "__main__":
    main()
