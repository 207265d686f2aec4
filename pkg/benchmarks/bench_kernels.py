"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from sparsepois._kernels import ckernels, pykernels


def cases(rng):
    eta = rng.normal(size=20000) * 0.3
    y = rng.poisson(1.5, size=20000).astype(float)
    mag = np.abs(rng.normal(size=10000))
    u = rng.normal(size=10000)
    eps = rng.standard_normal((200, 1000))
    return {
        "poisson_terms n=20000": lambda k: k.poisson_terms(eta, y, 500.0),
        "waterfill_theta m=10000 k=30": lambda k: k.waterfill_theta(mag, 30),
        "persp_prox m=10000 K=30": lambda k: k.persp_prox(u, 0.05, 30),
        "rh_prox m=10000": lambda k: k.rh_prox(u, 0.05, 0.2),
        "ar1_fill 200x1000": lambda k: k.ar1_fill(eps, 0.35),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if ckernels is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'compiled ms':>12s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        tc = min(timeit.repeat(lambda: fn(ckernels), number=1, repeat=args.repeat)) * 1e3
        tp = min(timeit.repeat(lambda: fn(pykernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:32s} {tc:12.3f} {tp:10.3f} {tp / tc:8.2f}")


if __name__ == "__main__":
    main()
