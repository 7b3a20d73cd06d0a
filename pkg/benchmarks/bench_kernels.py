#!/usr/bin/env python3
"""Benchmark the hot kernels with numba against the pure-numpy fallback.

Run with no arguments to time the current mode and then re-execute itself in
a subprocess with RESOBS_DISABLE_NUMBA=1 for the comparison table:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --json   # machine-readable, one mode
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def build_workloads():
    rng = np.random.default_rng(0)
    sym8 = rng.standard_normal((8, 8))
    sym8 = 0.5 * (sym8 + sym8.T)
    spd8 = sym8 @ sym8.T + 8 * np.eye(8)

    ric_a = np.array([[[-1.0, 0.5, 0.0], [0.0, -2.0, 0.3], [0.1, 0.0, -1.5]]])
    ric_q = np.array([np.eye(3)])
    ric_bb = np.array([0.5 * np.eye(3)])
    ric_h = np.zeros(2 * 5000 + 1, dtype=np.int64)

    steps, dim, du = 5000, 22, 8
    m = np.repeat(
        (0.1 * rng.standard_normal((dim, dim)) - 2 * np.eye(dim))[None],
        steps, axis=0,
    )
    g = np.repeat(rng.standard_normal((dim, du))[None], steps, axis=0)
    u = rng.standard_normal((steps, 3, du))
    s0 = rng.standard_normal(dim)
    return {
        "jacobi_eigh (8x8, 2000 calls)": lambda k: [
            k.jacobi_eigh(sym8) for _ in range(2000)
        ],
        "chol_solve (8x8, 2000 calls)": lambda k: [
            k.chol_solve(k.chol_lower(spd8)[0], np.eye(8))
            for _ in range(2000)
        ],
        "riccati_rk4 (3x3, 5000 steps)": lambda k: k.riccati_rk4(
            ric_a, ric_q, ric_bb, ric_h, np.eye(3), 1e-3, 1e9
        ),
        "lti_rk4_chunk (dim 22, 5000 steps)": lambda k: k.lti_rk4_chunk(
            m, g, u, s0, 1e-3
        ),
    }


def run_mode():
    from resobs import NUMBA_ENABLED, kernels

    kernels.warm_up()
    out = {"numba": NUMBA_ENABLED, "timings": {}}
    for name, work in build_workloads().items():
        work(kernels)  # one untimed pass
        t0 = time.perf_counter()
        work(kernels)
        out["timings"][name] = time.perf_counter() - t0
    return out


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--json", action="store_true",
                        help="print raw timings for the current mode only")
    args = parser.parse_args()

    mine = run_mode()
    if args.json:
        print(json.dumps(mine))
        return 0

    env = dict(os.environ, RESOBS_DISABLE_NUMBA="1")
    other_raw = subprocess.run(
        [sys.executable, __file__, "--json"],
        capture_output=True, text=True, env=env, check=True,
    )
    other = json.loads(other_raw.stdout.strip().splitlines()[-1])

    fast, slow = (mine, other) if mine["numba"] else (other, mine)
    print(f"{'kernel':38s} {'numba [s]':>12s} {'numpy [s]':>12s} {'speedup':>9s}")
    for name in fast["timings"]:
        tf = fast["timings"][name]
        ts = slow["timings"][name]
        print(f"{name:38s} {tf:12.4f} {ts:12.4f} {ts / tf:8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
