"""Time the numba and numpy implementations of the hot kernels.

    python benchmarks/bench_kernels.py [n]

Both paths are imported directly from ``staircase_dp._kernels`` so one process
compares them regardless of ``STAIRCASE_DP_NUMBA``.  The numba kernels are
called once before timing to exclude compilation.
"""

import math
import sys
import timeit

import numpy as np

from staircase_dp import _kernels as K


def main(n: int = 1_000_000, repeat: int = 5) -> None:
    rng = np.random.default_rng(0)
    eps, delta, gamma = 1.0, 1.0, 0.377
    b = math.exp(-eps)
    a = (1 - b) / (2 * delta * (gamma + b * (1 - gamma)))
    x = rng.normal(scale=3.0, size=n)
    ax = np.abs(x)
    u4 = rng.random((4, n))
    u3 = rng.random((3, n))
    ints = rng.integers(-50, 50, size=n)

    cases = {
        "staircase_pdf": (K.staircase_pdf_numpy, K.staircase_pdf_numba, (x, b, delta, gamma, a)),
        "staircase_sf": (K.staircase_sf_numpy, K.staircase_sf_numba, (ax, b, delta, gamma, a)),
        "staircase_transform": (K.staircase_transform_numpy, K.staircase_transform_numba,
                                (u4, eps, b, delta, gamma)),
        "discrete_pmf": (K.discrete_pmf_numpy, K.discrete_pmf_numba, (ints, b, 3, 2, 0.1)),
        "discrete_transform": (K.discrete_transform_numpy, K.discrete_transform_numba,
                               (u3, eps, b, 3, 2)),
    }
    print(f"n = {n}, best of {repeat}")
    print(f"{'kernel':22s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}  max|diff|")
    for name, (f_np, f_nb, args) in cases.items():
        out_np, out_nb = f_np(*args), f_nb(*args)
        first_np = out_np[0] if isinstance(out_np, tuple) else out_np
        first_nb = out_nb[0] if isinstance(out_nb, tuple) else out_nb
        diff = float(np.max(np.abs(first_np - first_nb)))
        t_np = min(timeit.repeat(lambda: f_np(*args), number=1, repeat=repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: f_nb(*args), number=1, repeat=repeat)) * 1e3
        print(f"{name:22s} {t_np:10.2f} {t_nb:10.2f} {t_np / t_nb:8.2f}  {diff:.3g}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 1_000_000)
