"""Benchmark the numba kernel against the pure-numpy fallback.

The fixed-point loop is the hot path: a cost-matrix fit evaluates it once
per objective call and ~2 * K * (K - 1) times per finite-difference
gradient. This script times single solves, full frontier traces, and one
small MAP fit under both backends and prints a comparison table.

Run:
    python benchmarks/bench_backends.py

Backend selection happens at import time, so the script re-executes itself
in a subprocess with RDSIG_NUMBA=0 to collect the numpy numbers.
"""

import json
import os
import subprocess
import sys
import time

import numpy as np


def timings():
    from rdsig import _kernels
    from rdsig.cost_fit import fit_cost_matrix
    from rdsig.costs import generic_labels, random_cost_matrix
    from rdsig.solver import BASettings, ba_optimal_channel, default_grid, trace_curve
    from rdsig.synth import make_observer, sample_counts

    results = {"backend": _kernels.active_backend()}

    # warm-up (includes one-time JIT compilation on the numba path)
    labs4 = generic_labels(4)
    rho4 = random_cost_matrix(labs4, 1)
    prior4 = np.full(4, 0.25)
    t0 = time.perf_counter()
    ba_optimal_channel(rho4, prior4, 1.0)
    results["warmup_s"] = time.perf_counter() - t0

    n = 2000
    t0 = time.perf_counter()
    for i in range(n):
        ba_optimal_channel(rho4, prior4, 0.5 + (i % 7), BASettings(tol=1e-12))
    results["solve_k4_us"] = (time.perf_counter() - t0) / n * 1e6

    labs16 = generic_labels(16)
    rho16 = random_cost_matrix(labs16, 2)
    prior16 = np.full(16, 1.0 / 16)
    n = 500
    t0 = time.perf_counter()
    for i in range(n):
        ba_optimal_channel(rho16, prior16, 0.5 + (i % 7), BASettings(tol=1e-12))
    results["solve_k16_us"] = (time.perf_counter() - t0) / n * 1e6

    t0 = time.perf_counter()
    for seed in range(10):
        k = 4 + seed % 5
        rho = random_cost_matrix(generic_labels(k), 100 + seed)
        trace_curve(rho, np.full(k, 1.0 / k), default_grid())
    results["trace_10_curves_s"] = time.perf_counter() - t0

    obs = make_observer(random_cost_matrix(labs4, 3), 4.0, prior4, seed=0)
    counts = sample_counts(obs, 20_000)
    t0 = time.perf_counter()
    fit_cost_matrix(counts)
    results["map_fit_k4_s"] = time.perf_counter() - t0

    return results


def main():
    if os.environ.get("_BENCH_CHILD"):
        print(json.dumps(timings()))
        return

    here = timings()
    env = dict(os.environ, RDSIG_NUMBA="0", _BENCH_CHILD="1")
    out = subprocess.run([sys.executable, os.path.abspath(__file__)],
                         env=env, capture_output=True, text=True, check=True)
    other = json.loads(out.stdout.strip().splitlines()[-1])

    rows = [
        ("warm-up (first solve)", "warmup_s", "s"),
        ("single solve, K=4", "solve_k4_us", "us"),
        ("single solve, K=16", "solve_k16_us", "us"),
        ("10 frontier traces (64-pt grid)", "trace_10_curves_s", "s"),
        ("MAP cost fit, K=4, 80k trials", "map_fit_k4_s", "s"),
    ]
    a, b = here["backend"], other["backend"]
    print(f"\n{'benchmark':36s} {a:>12s} {b:>12s} {'speedup':>9s}")
    print("-" * 73)
    for label, key, unit in rows:
        va, vb = here[key], other[key]
        speedup = vb / va if va > 0 else float("inf")
        print(f"{label:36s} {va:10.1f} {unit:2s} {vb:10.1f} {unit:2s} {speedup:8.1f}x")
    print("\n(speedup is the second backend's time over the first's)")


if __name__ == "__main__":
    main()
