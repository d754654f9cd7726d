"""Time the numba kernels against their pure-numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from glasslab import _kernels
from glasslab.model import FieldDist, ModelParams, coupling_matrix, sample_disorder


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def cases():
    p = ModelParams(n=200, k=20, theta=0.5, theta1=0.8, field_dist=FieldDist.two_point(0.3))
    d = sample_disorder(p, 0)
    J = coupling_matrix(p, d)
    h = np.asarray(d.fields)
    mask = p.clique_mask()
    rng = np.random.default_rng(1)
    u = rng.random((20, p.n))
    s0 = np.where(rng.random(p.n) < 0.5, 1.0, -1.0)

    def sweep(fn):
        def run():
            s = s0.copy()
            fn(J, h, mask, p.clique_coupling, s, u, np.empty((0, p.n)), 20, 1, True)
        return run

    pe = ModelParams(n=14, k=4, theta=0.5, theta1=0.8)
    de = sample_disorder(pe, 0)
    Jup = np.triu(coupling_matrix(pe, de), 1)
    he = np.asarray(de.fields)

    def enum(fn):
        return lambda: fn(Jup, he, pe.clique_mask(), pe.clique_coupling, 0, 1 << pe.n)

    X = np.where(rng.random((50, 24)) < 0.5, 1.0, -1.0)
    E = X.T @ X / X.shape[0]

    yield "heat_bath (n=200, 20 sweeps)", sweep(_kernels.heat_bath_numba), sweep(_kernels.heat_bath_numpy)
    yield "enumeration (n=14)", enum(_kernels.enum_block_numba), enum(_kernels.enum_block_numpy)
    yield "quadratic scan (n=24, k=4)", (lambda: _kernels.scan_quadratic_numba(E, 4)), (lambda: _kernels.scan_quadratic_numpy(E, 4))
    yield "abs scan (n=24, k=4, m=50)", (lambda: _kernels.scan_abs_numba(X, 4)), (lambda: _kernels.scan_abs_numpy(X, 4))


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed")
    print(f"{'kernel':<32}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for name, fast, slow in cases():
        fast()  # compile
        tf = _best(fast, args.repeat)
        ts = _best(slow, args.repeat)
        print(f"{name:<32}{tf:>12.5f}{ts:>12.5f}{ts / tf:>10.1f}")


if __name__ == "__main__":
    main()
