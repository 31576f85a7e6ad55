"""Numba vs numpy timing for the interpolation kernels and one approximation.

    python benchmarks/bench_kernels.py            # in-process kernel timings
    python benchmarks/bench_kernels.py --e2e      # also time first_approx_smoothed
                                                  # under HOMOG_NUMBA=1 and =0

Kernels are compiled on import whenever numba is present, so both paths can
be timed in one process; the end-to-end comparison uses subprocesses because
the dispatch flag is read once at import.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from rehomog import kernels


def best_of(fn, repeat=5):
    fn()  # warm-up (and JIT compile)
    ts = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t)
    return min(ts)


def kernel_cases(n_points, rng):
    t1 = rng.standard_normal(4096)
    t2 = rng.standard_normal((64, 4096))
    t4 = rng.standard_normal((8, 8, 64, 64))
    return [
        ("periodic rank1", kernels._periodic1_nb, kernels.interp_periodic_np, t1,
         rng.uniform(-10, 5000, (n_points, 1))),
        ("periodic rank2", kernels._periodic2_nb, kernels.interp_periodic_np, t2,
         rng.uniform(-10, 5000, (n_points, 2))),
        ("periodic rank4", kernels._periodic4_nb, kernels.interp_periodic_np, t4,
         rng.uniform(-10, 100, (n_points, 4))),
        ("periodic grad rank2", kernels._periodic2_grad_nb, kernels.interp_periodic_grad_np, t2,
         rng.uniform(-10, 5000, (n_points, 2))),
        ("clamped rank1", kernels._clamped1_nb, kernels.interp_clamped_np, t1,
         rng.uniform(-1, 4100, (n_points, 1))),
    ]


E2E = """
import time
from rehomog import _accel
from rehomog.coefficients import make_coefficient
from rehomog.cellsolve import compute_cell_correctors
from rehomog.domain import DomainMesh, rhs_mode, solve_homogenized
from rehomog.corrector import first_approx_smoothed
a = make_coefficient("trig_product", dim=1)
cells = compute_cell_correctors(a, 1024, 32, method="direct")
mesh = DomainMesh(1, 1 << 17)
f, _, _ = rhs_mode("cos", mesh)
u = solve_homogenized(cells.a0, f, mesh)
first_approx_smoothed(u, cells, 1 / 64, 1 / 4096, self_check=False)
t = time.perf_counter()
first_approx_smoothed(u, cells, 1 / 64, 1 / 4096, self_check=False)
print(_accel.NUMBA_ENABLED, time.perf_counter() - t)
"""


def end_to_end():
    out = {}
    for flag in ("1", "0"):
        env = dict(os.environ, HOMOG_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True,
                             text=True, check=True)
        enabled, secs = res.stdout.split()
        out[flag] = float(secs)
        print(f"first_approx_smoothed m=2^17  HOMOG_NUMBA={flag} (numba={enabled}): {secs}s")
    print(f"  speedup {out['0'] / out['1']:.2f}x")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--points", type=int, default=200_000)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--e2e", action="store_true")
    args = p.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':24s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speedup':>8s}  max|diff|")
    for name, nb, npf, table, idx in kernel_cases(args.points, rng):
        t_nb = best_of(lambda: nb(table, idx), args.repeat)
        t_np = best_of(lambda: npf(table, idx), args.repeat)
        diff = np.abs(nb(table, idx) - npf(table, idx)).max()
        print(f"{name:24s} {1e3 * t_nb:11.2f} {1e3 * t_np:11.2f} {t_np / t_nb:8.2f}  {diff:.1e}")
    if args.e2e:
        end_to_end()


if __name__ == "__main__":
    main()
