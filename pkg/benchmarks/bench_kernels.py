"""Benchmark the compiled kernels against the pure-numpy fallback.

Times the raw pointwise kernels and the full implicit operator application
(where they sit in the hot loop), then one penalized solve.  Run with

    python3 benchmarks/bench_kernels.py [n_r] [n_theta]

Force the fallback at import time with ALEFLOW_PURE=1 to cross-check the
whole-solver numbers under the pure backend.
"""

import sys
import time

import numpy as np

from aleflow import _kernels
from aleflow._kernels import pure
from aleflow.ale_map import DiskGrid, harmonic_extend
from aleflow.geometry import ReferenceCurve
from aleflow.smoothing import double_mollify
from aleflow.stokes_core import PenalizedStepSolver


def timeit(fn, repeat=200, warmup=5):
    for _ in range(warmup):
        fn()
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def bench_pointwise(n):
    rng = np.random.default_rng(0)
    coeff = np.ascontiguousarray(rng.standard_normal((2, 2, 2, 2, n)))
    grad = np.ascontiguousarray(rng.standard_normal((2, 2, n)))
    mat = np.ascontiguousarray(rng.standard_normal((2, 2, n)))
    vec = np.ascontiguousarray(rng.standard_normal((2, n)))
    packed_active = _kernels.pack_coefficients(coeff)
    packed_pure = pure.pack_coefficients(coeff)
    rows = []
    for name, a_args, p_args in (
            ("contract44", (packed_active, grad), (packed_pure, grad)),
            ("matvec22", (mat, vec), (mat, vec)),
            ("mattvec22", (mat, vec), (mat, vec))):
        t_active = timeit(lambda: getattr(_kernels, name)(*a_args))
        t_pure = timeit(lambda: getattr(pure, name)(*p_args))
        rows.append((name, t_active, t_pure))
    return rows


def bench_operator(n_r, n_theta):
    curve = ReferenceCurve.unit_circle(n_theta)
    grid = DiskGrid(n_r, n_theta)
    h = 0.02 * np.cos(2 * curve.s)
    m = harmonic_extend(double_mollify(h, 0.3, curve), curve, grid)
    solver = PenalizedStepSolver(grid, curve, dt=1e-3, theta=1e-6, eps=0.3)
    op = solver._operator_for(m)
    rng = np.random.default_rng(1)
    w = rng.standard_normal((2, n_r, n_theta))
    t_apply = timeit(lambda: op.apply_field(w), repeat=50)

    g_bnd = -curve.N
    zero = np.zeros_like(w)
    t_solve = timeit(lambda: solver.solve(m, zero, g_bnd, zero), repeat=5,
                     warmup=1)
    return t_apply, t_solve


def main():
    n_r = int(sys.argv[1]) if len(sys.argv) > 1 else 32
    n_theta = int(sys.argv[2]) if len(sys.argv) > 2 else 128
    n = n_r * n_theta
    print(f"active kernel backend: {_kernels.backend_name()}")
    print(f"grid {n_r} x {n_theta} ({n} nodes)\n")

    print(f"{'kernel':<12} {'active':>12} {'pure numpy':>12} {'speedup':>9}")
    for name, t_active, t_pure in bench_pointwise(n):
        print(f"{name:<12} {t_active * 1e6:>10.1f}us {t_pure * 1e6:>10.1f}us "
              f"{t_pure / t_active:>8.2f}x")

    t_apply, t_solve = bench_operator(n_r, n_theta)
    print(f"\noperator application: {t_apply * 1e3:.3f} ms")
    print(f"penalized solve:      {t_solve * 1e3:.3f} ms")
    print("\n(re-run with ALEFLOW_PURE=1 to time the solver on the fallback)")


if __name__ == "__main__":
    main()
