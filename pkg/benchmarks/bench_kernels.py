"""Time the numba kernels against their numpy fallbacks on representative sizes.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each line reports the best-of-``repeat`` time per backend, the speedup and the
max difference between the two results.
"""
import argparse
import time

import numpy as np

from polyinv import _accel


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(rng):
    n_t, n_s = 2000, 128 * 128
    tx, ty = rng.uniform(-0.8, 0.8, n_t), rng.uniform(0.9, 2.1, n_t)
    sx, sy = rng.uniform(-1.2, 1.2, n_s), rng.uniform(0.4, 2.4, n_s)
    wf = rng.normal(size=n_s) + 1j * rng.normal(size=n_s)
    yield "cauchy_far_sum 2000x16384", lambda: _accel.cauchy_far_sum(tx, ty, 0.3, sx, sy, wf)

    vals = rng.normal(size=(128, 64)) + 1j * rng.normal(size=(128, 64))
    phi = 0.5 * np.pi * np.polynomial.legendre.leggauss(64)[0]
    qs, qp = rng.uniform(0, 2 * np.pi, 200_000), rng.uniform(-1.5, 1.5, 200_000)
    yield "interp_cubic 128x64 -> 2e5", lambda: _accel.interp_cubic(vals, 0.0, 2 * np.pi / 128, phi, qs, qp)

    n = 200_000
    g = np.tile(np.eye(2), (n, 1, 1)) * rng.uniform(0.5, 2.0, (n, 1, 1))
    dg = rng.normal(size=(n, 2, 2, 2))
    dg = 0.5 * (dg + dg.transpose(0, 1, 3, 2))
    v = rng.normal(size=(n, 2))
    yield "geodesic_accel 2e5", lambda: _accel.geodesic_accel(g, dg, v)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if _accel.numba is None:
        raise SystemExit("numba is not importable; nothing to compare")
    print(f"{'kernel':<30s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, fn in cases(np.random.default_rng(0)):
        _accel.set_backend("numba")
        fn()                                  # compile outside the timing
        t_nb, out_nb = _best(fn, args.repeat)
        _accel.set_backend("numpy")
        t_np, out_np = _best(fn, args.repeat)
        diff = float(np.max(np.abs(out_nb - out_np)))
        print(f"{name:<30s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f} {diff:10.2e}")
    _accel.set_backend("numba")


if __name__ == "__main__":
    main()
