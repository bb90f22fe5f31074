#!/usr/bin/env python3
"""Numba vs numpy kernels: median wall time and max abs difference.

    python3 benchmarks/bench_kernels.py [--repeat 50] [--end-to-end]

Shapes mirror one 5-way 1-shot episode against 64 base classes, plus the
LLE fit over the base means. ``--end-to-end`` also times a full ``eval``
run in a subprocess per backend (selected through CBMFS_BACKEND); "compute"
excludes interpreter start-up and numba cache loading, "wall" includes them.
"""

import argparse
import json
import os
import subprocess
import sys
import tempfile
import time

import numpy as np

from cbmfs.kernels import load_backend


def median_us(fn, args, repeat):
    fn(*args)  # warm-up (and JIT compile for numba)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return 1e6 * float(np.median(times))


def cases(rng):
    base = rng.standard_normal((64, 640))
    queries = rng.standard_normal((75, 640))
    protos = rng.standard_normal((5, 640))
    logits = rng.standard_normal((80, 64))
    p = np.exp(logits - logits.max(1, keepdims=True))
    p /= p.sum(1, keepdims=True)
    x = rng.standard_normal((80, 640))
    idx = np.argsort(rng.random((80, 64)), axis=1)[:, :10]
    nbrs = np.ascontiguousarray(base[idx])
    return {
        "pairwise_cosine": (queries, base),
        "pairwise_neg_euclidean": (queries, base),
        "softmax_rows": (logits,),
        "pairwise_neg_kl": (p[:75], p[75:], 1e-12),
        "knn_rows": (base, base, 10, np.arange(64, dtype=np.int64)),
        "barycenter_weights": (x, nbrs, 1e-3),
        "pairwise_cosine (protos)": (protos, base),
    }


def bench_kernels(repeat):
    np_k, nb_k = load_backend("numpy"), load_backend("numba")
    if nb_k is np_k:
        print("numba not importable; nothing to compare")
        return
    data = cases(np.random.default_rng(0))
    print(f"{'kernel':<26}{'numpy us':>12}{'numba us':>12}{'speedup':>10}{'max |diff|':>14}")
    for label, args in data.items():
        name = label.split()[0]
        a, b = getattr(np_k, name), getattr(nb_k, name)
        ra, rb = np.asarray(a(*args)), np.asarray(b(*args))
        diff = float(np.max(np.abs(ra.astype(np.float64) - rb.astype(np.float64))))
        ta, tb = median_us(a, args, repeat), median_us(b, args, repeat)
        print(f"{label:<26}{ta:>12.1f}{tb:>12.1f}{ta / tb:>9.2f}x{diff:>14.2e}")


def bench_end_to_end():
    with tempfile.TemporaryDirectory() as tmp:
        cli = [sys.executable, "-m", "cbmfs"]
        subprocess.run(cli + ["gen-synthetic", "--out", tmp, "--dim", "64", "--n-base", "64", "--n-novel", "20",
                              "--samples-per-class", "40", "--seed", "1"], check=True)
        for method in ("cbm", "cbm-lle"):
            for backend in ("numpy", "numba"):
                env = dict(os.environ, CBMFS_BACKEND=backend)
                cmd = cli + ["eval", "--base", f"{tmp}/base.cbme", "--novel", f"{tmp}/novel.cbme",
                             "--method", method, "--out", f"{tmp}/{method}-{backend}.json"]
                subprocess.run(cmd, env=env, check=True)  # warm the numba cache
                t0 = time.perf_counter()
                subprocess.run(cmd, env=env, check=True)
                wall = time.perf_counter() - t0
                with open(f"{tmp}/{method}-{backend}.json") as fh:
                    compute = json.load(fh)["elapsed_seconds"]
                print(f"eval {method:<8} {backend:<6} compute {compute:6.2f}s  wall {wall:6.2f}s (2000 tasks)")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args()
    bench_kernels(args.repeat)
    if args.end_to_end:
        bench_end_to_end()


if __name__ == "__main__":
    main()
