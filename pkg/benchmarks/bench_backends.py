"""Compiled kernel vs numpy fallback on the dense scene fixture.

    python benchmarks/bench_backends.py [--reps 11] [--n-groups 20]
"""
import argparse
import statistics
import time

import numpy as np

from sglstm import backend
from sglstm.core import Grouping, observed_windows
from sglstm.predictors import PredictorKind, init_params, predict_learned
from sglstm.synth import dense_fixture


def median_ms(fn, reps, warmup=3):
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times) * 1e3


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=11)
    ap.add_argument("--n-groups", type=int, default=20)
    ap.add_argument("--group-size", type=int, default=3)
    args = ap.parse_args()
    scene, grouping = dense_fixture(args.n_groups, args.group_size)
    print(f"backends available: {', '.join(backend.AVAILABLE)} (default {backend.BACKEND})")
    print(f"{'method':<14}{'backend':<10}{'entities':>9}{'median ms':>11}{'max |diff|':>12}")
    for kind in (PredictorKind.VANILLA, PredictorKind.OCCUPANCY, PredictorKind.SOCIAL, PredictorKind.SOCIAL_GROUP):
        params = init_params(kind, seed=0)
        g = grouping if kind.grouped else Grouping.singletons(scene.tracks)
        windows = observed_windows(scene, g, 0)
        ref = None
        for name in backend.AVAILABLE:
            out = np.stack([h.gaussians for h in predict_learned(kind, windows, params, name).horizons])
            ref = out if ref is None else ref
            ms = median_ms(lambda: predict_learned(kind, windows, params, name), args.reps)
            print(f"{kind.label:<14}{name:<10}{len(windows):>9}{ms:>11.3f}{np.max(np.abs(out - ref)):>12.2e}")


if __name__ == "__main__":
    main()
