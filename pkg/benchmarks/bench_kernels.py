#!/usr/bin/env python3
"""Compare the numba kernels against the pure-numpy fallbacks.

Run twice to see both backends:

    python3 benchmarks/bench_kernels.py
    PLATOONLOC_BACKEND=numpy python3 benchmarks/bench_kernels.py

or pass --both to fork the comparison automatically.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np


def bench(fn, *args, reps=200):
    fn(*args)  # warm-up / JIT
    t0 = time.perf_counter()
    for _ in range(reps):
        fn(*args)
    return (time.perf_counter() - t0) / reps


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--both", action="store_true", help="run numba and numpy backends")
    parser.add_argument("--reps", type=int, default=200)
    args = parser.parse_args()

    if args.both:
        for backend in ("numba", "numpy"):
            env = dict(os.environ, PLATOONLOC_BACKEND=backend)
            subprocess.run(
                [sys.executable, __file__, "--reps", str(args.reps)],
                env=env,
                check=True,
            )
        return

    from platoonloc import kernels

    rng = np.random.default_rng(0)
    print(f"backend: {kernels.backend_name()}")
    cases = [
        ("ula 16x20", lambda: kernels.ula_phase_matrix(rng.uniform(-1, 1, 20), 16)),
        ("ula 64x200", lambda: kernels.ula_phase_matrix(rng.uniform(-1, 1, 200), 64)),
        ("upa 16x16x100", lambda: kernels.upa_phase_matrix(
            rng.uniform(-1, 1, 100), rng.uniform(-1, 1, 100), 16, 16)),
        ("upa 4x4x20", lambda: kernels.upa_phase_matrix(
            rng.uniform(-1, 1, 20), rng.uniform(-1, 1, 20), 4, 4)),
    ]
    for name, fn in cases:
        dt = bench(fn, reps=args.reps)
        print(f"  {name:16s} {dt * 1e6:9.1f} us")

    a = rng.standard_normal((128, 80)) + 1j * rng.standard_normal((128, 80))
    s = rng.standard_normal((80, 80)) + 1j * rng.standard_normal((80, 80))
    s = s @ s.conj().T
    dt = bench(kernels.expected_quad_energy, a, s, reps=args.reps)
    print(f"  quad 128x80      {dt * 1e6:9.1f} us  (BLAS path on either backend)")


if __name__ == "__main__":
    main()
