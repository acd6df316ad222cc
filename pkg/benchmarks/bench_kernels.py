"""Throughput comparison of the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--slice-size N] [--repeats N]
"""

import argparse
import time

import numpy as np

from labelbudget._kernels import get_backend


def bench(fn, args, repeats, warmup=3):
    for _ in range(warmup):
        fn(*args)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_training(backends, repeats=3):
    """Full builtin fits on an in-memory phantom split, one per backend."""
    import tempfile
    from pathlib import Path

    import labelbudget.training as training
    from labelbudget.datasets import generate_phantoms
    from labelbudget.training import TrainConfig, run_builtin
    from labelbudget.transforms import (
        attach_training_slices,
        split_test,
        split_train_val,
    )

    with tempfile.TemporaryDirectory() as td:
        ds = generate_phantoms(8, (32, 32, 32), seed=5, out_dir=Path(td) / "ds")
        trainval, test = split_test(ds, 0.2, seed=0)
        train, val = split_train_val(trainval, seed=1)
        train = attach_training_slices(train, trainval.manifest.labeled_count())
        config = TrainConfig(seed=1, max_epochs=30, patience=10)

        print(f"\nbuiltin training, 8 phantoms 32^3, best of {repeats} fits\n")
        original = training._kernels
        times = {}
        for name, backend in backends.items():
            training._kernels = backend
            try:
                best = float("inf")
                for _ in range(repeats):
                    t0 = time.perf_counter()
                    run_builtin(train, val, test, config)
                    best = min(best, time.perf_counter() - t0)
                times[name] = best
            finally:
                training._kernels = original
        row = f"{'full fit + eval':<22}" + "".join(
            f"{times[b] * 1e3:>12.1f}ms" for b in backends
        )
        if len(times) == 2:
            row += f"{times['numpy'] / times['native']:>9.1f}x"
        print(row)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--slice-size", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--no-training", action="store_true",
                        help="skip the end-to-end training benchmark")
    args = parser.parse_args()

    n = args.slice_size
    rng = np.random.default_rng(0)
    img = rng.normal(0.4, 0.3, size=(n, n)).astype(np.float32)
    X = rng.normal(size=(n * n, 4))
    y = (rng.random(n * n) > 0.7).astype(np.float64)
    w = rng.normal(size=4)
    a = (rng.random(n * n * 16) > 0.5).astype(np.uint8)
    b = (rng.random(n * n * 16) > 0.5).astype(np.uint8)

    cases = [
        ("extract_features", lambda k: (k.extract_features, (img,))),
        ("logistic_loss_grad", lambda k: (k.logistic_loss_grad, (X, y, w, 0.1, 1.5, 0.7))),
        ("predict_labels", lambda k: (k.predict_labels, (X, w, 0.1))),
        ("overlap_counts", lambda k: (k.overlap_counts, (a, b))),
    ]

    backends = {"numpy": get_backend("numpy")}
    try:
        backends["native"] = get_backend("native")
    except ImportError:
        print("native extension not built; benchmarking numpy fallback only\n")

    print(f"slice size {n}x{n}, best of {args.repeats} runs\n")
    header = f"{'kernel':<22}" + "".join(f"{name:>14}" for name in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, make in cases:
        times = {}
        for bname, backend in backends.items():
            fn, fargs = make(backend)
            times[bname] = bench(fn, fargs, args.repeats)
        row = f"{name:<22}" + "".join(f"{times[b] * 1e6:>12.1f}us" for b in backends)
        if len(times) == 2:
            row += f"{times['numpy'] / times['native']:>9.1f}x"
        print(row)

    if not args.no_training:
        bench_training(backends)


if __name__ == "__main__":
    main()
