"""Time the numba and numpy kernel backends side by side.

    python benchmarks/bench_kernels.py [--repeat 3]

Each kernel runs once to warm up (numba compiles on first call), then the
best of ``--repeat`` timings is reported.
"""
import argparse
import time

import numpy as np

from fidgan import _kernels, tomo


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(np.pad(rng.normal(size=(40, 16, 32, 32)), ((0, 0), (0, 0), (1, 1), (1, 1))))
    cols = rng.normal(size=(16 * 9, 40 * 32 * 32))
    n = 128
    img = rng.uniform(size=(n, n))
    g = tomo.ScanGeometry.for_image(n)
    m = int(np.ceil((np.sqrt(2) * n / 2 + 1) / 0.5))
    ts = np.arange(-m, m + 1) * 0.5
    sino = rng.normal(size=(g.n_angles, g.n_detectors))
    yield "im2col 40x16x32x32 k3", lambda k: k.im2col(x, 3, 3, 1, 32, 32)
    yield "col2im 40x16x32x32 k3", lambda k: k.col2im(cols, 40, 16, 34, 34, 3, 3, 1, 32, 32)
    yield "radon 128^2 x 180", lambda k: k.radon(img, g.angles, g.offsets, ts, 0.5)
    yield "backproject 128^2 x 180", lambda k: k.backproject(sino, g.angles, n, 1.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels.numba_impl is None:
        raise SystemExit("numba is not installed")
    print(f"{'kernel':28s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s}")
    for name, call in cases():
        tn = best_of(lambda: call(_kernels.numpy_impl), args.repeat)
        tb = best_of(lambda: call(_kernels.numba_impl), args.repeat)
        print(f"{name:28s} {tn:10.4f} {tb:10.4f} {tn / tb:8.1f}x")


if __name__ == "__main__":
    main()
