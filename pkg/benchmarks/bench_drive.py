"""Compiled vs pure-Python driven integrator.

    python benchmarks/bench_drive.py [--steps N] [--repeat R]

Runs the same compensated RK4 drive through both kernels, checks that the
results agree and reports steps per second.
"""
import argparse
import time

import numpy as np

from nhberry import _kernels
from nhberry.model import gauge_vectors


def timed(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    z, r, z0, omega = 0.5, 1.0, 1.0, 0.0005 * np.pi
    dt = 2e-3
    R0 = gauge_vectors(r, 0.0, z, z0, 1)[0]
    psi0 = R0 / np.linalg.norm(R0)
    call = (z, r, omega, z0, 1, _kernels.MODE_EXPECTATION, dt, args.steps, 1000, psi0)

    t_py, ref = timed(_kernels.drive_py, call, 1)
    print(f"pure python : {t_py:8.3f} s  {args.steps / t_py:12.0f} steps/s")
    if not _kernels.COMPILED:
        print("compiled    : extension not built (set up with a C compiler and Cython)")
        return
    t_c, out = timed(_kernels.drive, call, args.repeat)
    print(f"compiled    : {t_c:8.3f} s  {args.steps / t_c:12.0f} steps/s")
    print(f"speed-up    : {t_py / t_c:8.1f}x")
    dev = np.abs(out["final_state"] - ref["final_state"]).max()
    print(f"max |final state difference| = {dev:.2e}")


if __name__ == "__main__":
    main()
