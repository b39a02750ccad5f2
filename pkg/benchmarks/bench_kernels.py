#!/usr/bin/env python3
"""Compare the compiled kernels against the pure numpy fallback.

Times the two hot kernels (bending state, stretching state) and a full
equilibrium solve at several discretizations.  Run after building the
extension:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from rodforce import _kernels_py

try:
    from rodforce import _kernels_cy

    HAVE_CY = True
except ImportError:
    _kernels_cy = None
    HAVE_CY = False


def bench(fn, *args, repeat=2000):
    fn(*args)  # warmup
    start = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - start) / repeat


def random_rod(n, seed=0):
    rng = np.random.default_rng(seed)
    steps = rng.normal(0.0, 0.02, (n, 3)) + np.array([0.02, 0.0, 0.0])
    nodes = np.vstack([np.zeros(3), np.cumsum(steps, axis=0)])
    rest = np.linalg.norm(np.diff(nodes, axis=0), axis=1)
    ks = np.full(n, 1e3 * 0.05 / rest.mean() ** 2)
    return nodes, rest, ks


def main():
    print(f"compiled kernels available: {HAVE_CY}")
    header = f"{'n':>6} {'kernel':>14} {'python':>12} {'cython':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for n in (30, 100, 300, 1000):
        nodes, rest, ks = random_rod(n)
        repeat = max(200, 20000 // n)
        t_py = bench(_kernels_py.bend_state, nodes, rest, 0.05, repeat=repeat)
        if HAVE_CY:
            t_cy = bench(_kernels_cy.bend_state, nodes, rest, 0.05, repeat=repeat)
            print(f"{n:>6} {'bend_state':>14} {t_py * 1e6:>10.1f}us {t_cy * 1e6:>10.1f}us {t_py / t_cy:>7.1f}x")
        else:
            print(f"{n:>6} {'bend_state':>14} {t_py * 1e6:>10.1f}us {'-':>12} {'-':>8}")
        t_py = bench(_kernels_py.stretch_state, nodes, rest, ks, repeat=repeat)
        if HAVE_CY:
            t_cy = bench(_kernels_cy.stretch_state, nodes, rest, ks, repeat=repeat)
            print(f"{n:>6} {'stretch_state':>14} {t_py * 1e6:>10.1f}us {t_cy * 1e6:>10.1f}us {t_py / t_cy:>7.1f}x")
        else:
            print(f"{n:>6} {'stretch_state':>14} {t_py * 1e6:>10.1f}us {'-':>12} {'-':>8}")

    print("\nfull equilibrium solve (gravity-only, 30 pieces, 1e-9 N):")
    import os
    import subprocess
    import sys

    for label, env_value in (("cython", ""), ("python", "1")):
        if label == "cython" and not HAVE_CY:
            continue
        env = dict(os.environ, RODFORCE_PURE_PYTHON=env_value)
        code = (
            "import time\n"
            "from rodforce.simulator import SolverParams, hanging_wire_scenario, relax_to_equilibrium\n"
            "sc = hanging_wire_scenario(solver=SolverParams(force_tolerance=1e-9))\n"
            "relax_to_equilibrium(sc)\n"
            "start = time.perf_counter()\n"
            "for _ in range(3): relax_to_equilibrium(sc)\n"
            "print((time.perf_counter() - start) / 3)\n"
        )
        out = subprocess.run(
            [sys.executable, "-c", code], env=env, capture_output=True, text=True
        )
        print(f"  {label:>7}: {float(out.stdout.strip()) * 1e3:.1f} ms/solve")


if __name__ == "__main__":
    main()
