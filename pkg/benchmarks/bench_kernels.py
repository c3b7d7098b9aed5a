"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 5000] [--dim 64] [--k 15] [--repeat 3]

Numba compile time is paid in a warm-up call and excluded. Each row reports
the best of ``--repeat`` runs and checks that both backends agree.
"""

import argparse
import time

import numpy as np

from logactive.kernels import HAS_NUMBA, NUMBA_KERNELS, NUMPY_KERNELS
from logactive.synthetic import make_blobs


def _best(fn, args, repeat):
    fn(*args)  # warm-up / JIT
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t)
    return best, out


def _close(a, b):
    if isinstance(a, tuple):
        return all(_close(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-9, atol=1e-9)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--k", type=int, default=15)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    if not HAS_NUMBA:
        print("numba is not installed; only the numpy backend is available")
        return 1

    X, truth = make_blobs(args.n, args.k, dim=args.dim, seed=0)
    rng = np.random.default_rng(0)
    C = X[rng.choice(args.n, args.k, replace=False)]
    labels = truth.astype(np.int64)
    D = NUMPY_KERNELS["pairwise_dist"](X)
    cases = {
        "assign_nearest": (X, C),
        "centroid_sums": (X, labels, args.k),
        "pairwise_dist": (X,),
        "silhouette_from_dist": (D, labels, args.k),
        "silhouette_direct": (X, labels, args.k),
    }
    print(f"n={args.n} dim={args.dim} k={args.k} (best of {args.repeat})")
    print(f"{'kernel':<22}{'numpy s':>10}{'numba s':>10}{'speedup':>9}  agree")
    for name, kargs in cases.items():
        t_np, out_np = _best(NUMPY_KERNELS[name], kargs, args.repeat)
        t_nb, out_nb = _best(NUMBA_KERNELS[name], kargs, args.repeat)
        print(f"{name:<22}{t_np:>10.4f}{t_nb:>10.4f}{t_np / t_nb:>8.1f}x  {_close(out_np, out_nb)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
