"""Compare the compiled and numpy hidden-state kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Times the raw kernel on the two shapes the package uses (one long run for
fitting, many short batched reruns for importance), then one full stZFI/stPFI
computation under each backend in a subprocess.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from esnfi import _recur_py, kernels

SHAPES = {
    "fit (B=1, L=68, n=50)": (1, 68, 50),
    "importance b=3 (B=680, L=3, n=50)": (680, 3, 50),
    "importance b=3, n_h=200 (B=680, L=3)": (680, 3, 200),
}

E2E = """
import time, numpy as np
from esnfi.simulator import SimConfig, simulate_dataset, analyze_dataset
from esnfi.reservoir import EsnHyperparams
from esnfi.kernels import BACKEND
d = simulate_dataset(SimConfig(0.2, 0.2, 0.2, 0.1, 0.05, 0.5, 0.9))
t0 = time.perf_counter()
for _ in range({n}):
    analyze_dataset(d, EsnHyperparams(), (1, 2, 3), replications=10)
print(BACKEND, (time.perf_counter() - t0) / {n})
"""


def bench_kernel(fn, shape, repeat):
    B, L, n = shape
    g = np.random.default_rng(0)
    W = g.uniform(-0.05, 0.05, (n, n))
    drive = g.normal(size=(B, L, n))
    h0 = np.zeros((B, n))
    return min(timeit.repeat(lambda: fn(W, drive, h0), number=5, repeat=repeat)) / 5


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--datasets", type=int, default=3, help="datasets in the end-to-end timing")
    args = ap.parse_args()
    if kernels.BACKEND != "cython":
        print("compiled kernel unavailable; build with `pip install -e . --no-build-isolation`")
        return 1
    print(f"{'shape':40s} {'cython ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, shape in SHAPES.items():
        c = bench_kernel(kernels.recur_batch, shape, args.repeat)
        p = bench_kernel(_recur_py.recur_batch, shape, args.repeat)
        print(f"{name:40s} {c * 1e3:10.3f} {p * 1e3:10.3f} {p / c:8.2f}")
    print("\nend to end, one simulated dataset (both methods, b=1..3, R=10):")
    for env in ({}, {"ESNFI_PURE_PYTHON": "1"}):
        out = subprocess.run([sys.executable, "-c", E2E.format(n=args.datasets)], capture_output=True,
                             text=True, env={**os.environ, **env}, check=True).stdout.split()
        print(f"  {out[0]:8s} {float(out[1]) * 1e3:8.1f} ms per dataset")
    return 0


if __name__ == "__main__":
    sys.exit(main())
