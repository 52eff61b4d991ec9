"""Time the compiled sparse kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 3000] [--deg 10] [--dim 64] [--repeat 20]

Prints one line per kernel with the best-of-``repeat`` time of each backend,
the speedup, and the max absolute difference between their outputs.
"""

import argparse
import timeit

import numpy as np

from cgrl import _kernels_py as py
from cgrl import kernels

try:
    from cgrl import _kernels as compiled
except ImportError:  # pragma: no cover
    compiled = None


def random_csr(n, deg, rng):
    counts = rng.poisson(deg, n)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    indices = rng.integers(0, n, indptr[-1]).astype(np.int64)
    return indptr, indices, rng.random(indptr[-1])


def cases(n, deg, dim, seed=0):
    rng = np.random.default_rng(seed)
    indptr, indices, data = random_csr(n, deg, rng)
    x = rng.standard_normal((n, dim))
    m = len(indices)
    return {
        "spmm": (indptr, indices, data, x),
        "spmm_t": (indptr, indices, data, x, n),
        "segment_sum": (rng.standard_normal((m, dim)), indptr),
        "segment_softmax": (rng.standard_normal(m), indptr),
        "scatter_add_rows": (rng.standard_normal((m, dim)), indices, n),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=3000)
    ap.add_argument("--deg", type=int, default=10)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if compiled is None:
        print("compiled extension not built; only the fallback is available")
        return 1
    print(f"active backend: {kernels.BACKEND}; n={args.n} deg~{args.deg} dim={args.dim}")
    print(f"{'kernel':18s} {'python ms':>10s} {'compiled ms':>12s} {'speedup':>8s} {'max diff':>10s}")
    for name, a in cases(args.n, args.deg, args.dim).items():
        f_py, f_c = getattr(py, name), getattr(compiled, name)
        t_py = min(timeit.repeat(lambda: f_py(*a), number=1, repeat=args.repeat)) * 1e3
        t_c = min(timeit.repeat(lambda: f_c(*a), number=1, repeat=args.repeat)) * 1e3
        diff = np.abs(np.asarray(f_py(*a)) - np.asarray(f_c(*a))).max()
        print(f"{name:18s} {t_py:10.3f} {t_c:12.3f} {t_py / t_c:8.2f} {diff:10.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
