"""Time the numpy and numba kernel paths side by side.

    python3 benchmarks/bench_kernels.py [--repeat N]

The numba column is blank when numba is unavailable or AGELAB_NUMBA=0.
"""
import argparse
import itertools
import timeit

import numpy as np

from agelab import kernels


def cases(rng):
    for n in (1000, 4000):
        x = rng.standard_normal((n, 8))
        yield f"knn_kth_distance n={n} d=8 k=5", "knn_kth_distance", (x, 5)
    for K in (3, 4):
        maps = np.array(list(itertools.product(range(K), repeat=K)))
        dists = rng.dirichlet(np.ones(K), size=K ** K)
        yield f"pushforward_many K={K} maps={len(maps)}", "pushforward_many", (dists[0], maps, K)
        yield f"pushforward_table K={K} {len(dists)}x{len(maps)}", "pushforward_table", (dists, maps, K)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    paths = {"numpy": kernels.numpy_path(), "numba": kernels.numba_path()}
    print(f"{'case':44s} {'numpy ms':>10s} {'numba ms':>10s} {'max |diff|':>11s}")
    for label, name, a in cases(np.random.default_rng(0)):
        times, outs = {}, {}
        for key, impl in paths.items():
            if impl is None:
                continue
            fn = impl[name]
            outs[key] = fn(*a)  # warm-up, triggers jit compilation
            times[key] = min(timeit.repeat(lambda: fn(*a), number=1, repeat=args.repeat)) * 1e3
        diff = float(np.max(np.abs(outs["numpy"] - outs["numba"]))) if "numba" in outs else float("nan")
        nb = f"{times['numba']:10.2f}" if "numba" in times else f"{'':>10s}"
        print(f"{label:44s} {times['numpy']:10.2f} {nb} {diff:11.1e}")


if __name__ == "__main__":
    main()
