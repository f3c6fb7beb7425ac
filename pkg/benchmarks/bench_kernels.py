"""Compare the numba kernels with the pure-numpy fallback.

Each backend runs in its own interpreter because the backend is chosen at
import time from ``APSEST_DISABLE_NUMBA``. Compile time is excluded by a
warm-up call.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, sys, time
import numpy as np
from apsest import _jit
from apsest.estimators import HaugazeauConfig, ProxSubproblem, haugazeau_estimate
from apsest.forward_model import ArrayConfig, build_grid, build_ula_operator
from apsest.solvers import FeasibilityProblem, nnls, pocs_baseline
from apsest.statistics import build_metric, compute_statistics
from apsest.synthesis import ApsModelConfig, sample_aps, sample_dataset

repeat = int(sys.argv[1])
op = build_ula_operator(ArrayConfig(), build_grid())
a = op.matrix_a
stats = compute_statistics(sample_dataset(ApsModelConfig(), op.grid, 1000, 0))
metric = build_metric(stats, stats.spectral_norm / 100)
rho = sample_aps(ApsModelConfig(), op.grid, np.random.default_rng(1))
r = a @ rho
problem = FeasibilityProblem(a, r)
prox = ProxSubproblem(metric, a, r, 5.0)

cases = {
    "nnls 31x180": lambda: nnls(a, r),
    "prox (cold start)": lambda: prox(stats.mean, warm_start=False),
    "pocs 500 steps": lambda: pocs_baseline(problem, max_iters=500),
    "haugazeau 500 steps": lambda: haugazeau_estimate(metric, a, r, stats.mean, HaugazeauConfig(5.0, 500)),
}
out = {"jit": _jit.JIT_ENABLED, "ms": {}}
for name, fn in cases.items():
    fn()
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    out["ms"][name] = 1e3 * best
print(json.dumps(out))
"""


def run(disable: bool, repeat: int) -> dict:
    env = {**os.environ, "APSEST_DISABLE_NUMBA": "1" if disable else "0"}
    proc = subprocess.run([sys.executable, "-c", WORKLOAD, str(repeat)], env=env, capture_output=True,
                          text=True, check=True)
    return json.loads(proc.stdout)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5, help="timed runs per case (best is reported)")
    args = parser.parse_args()
    compiled = run(False, args.repeat)
    plain = run(True, args.repeat)
    if not compiled["jit"]:
        print("numba is not available; both columns use the numpy fallback", file=sys.stderr)
    print(f"{'case':<22}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name, fast in compiled["ms"].items():
        slow = plain["ms"][name]
        print(f"{name:<22}{fast:>12.2f}{slow:>12.2f}{slow / fast:>9.1f}x")


if __name__ == "__main__":
    main()
