"""Time the convolution backends against each other.

Runs a handful of representative layer shapes through every available
kernel backend and prints a table of best-of-N wall times. The compiled
direct-loop kernel wins on the small probe-sized workloads the eval
harness spends its time on; the numpy backend (im2col + BLAS) takes over
at real network sizes. Pick per workload with MPCQ_KERNEL=cython|numpy.

Usage:
    python3 -m benchmarks.bench_conv --repeat 5 --batch 8
"""

import argparse
import time

import numpy as np

from mpcq.kernels import available_backends, conv2d_batch, set_backend

# (name, out_ch, in_ch, kernel, spatial, stride, padding, groups)
SHAPES = [
    ("toy 3x3", 8, 8, 3, 8, 1, 1, 1),
    ("stem 7x7/2", 64, 3, 7, 224, 2, 3, 1),
    ("stage1 3x3", 64, 64, 3, 56, 1, 1, 1),
    ("stage3 3x3", 256, 256, 3, 14, 1, 1, 1),
    ("project 1x1", 512, 256, 1, 14, 1, 0, 1),
    ("grouped 3x3", 64, 64, 3, 28, 1, 1, 4),
]


def bench_one(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5,
                    help="timing repetitions, best is reported")
    ap.add_argument("--batch", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    backends = available_backends()
    width = max(len(b) for b in backends)

    print(f"batch={args.batch} repeat={args.repeat} backends={', '.join(backends)}")
    header = f"{'shape':<14}" + "".join(f"{b:>{width + 9}}" for b in backends)
    print(header)
    print("-" * len(header))

    for name, cout, cin, k, hw, stride, pad, groups in SHAPES:
        w = rng.standard_normal((cout, cin // groups, k, k)).astype(np.float32)
        x = rng.standard_normal((args.batch, cin, hw, hw)).astype(np.float32)
        row = f"{name:<14}"
        outputs = {}
        for backend in backends:
            set_backend(backend)
            conv2d_batch(w, x, stride, pad, groups)  # warm up
            dt = bench_one(lambda: conv2d_batch(w, x, stride, pad, groups),
                           args.repeat)
            outputs[backend] = conv2d_batch(w, x, stride, pad, groups)
            row += f"{dt * 1e3:>{width + 6}.2f} ms"
        print(row)
        vals = list(outputs.values())
        worst = max(float(np.abs(vals[0] - v).max()) for v in vals[1:]) \
            if len(vals) > 1 else 0.0
        if worst > 1e-3:
            raise SystemExit(f"{name}: backends disagree by {worst}")


if __name__ == "__main__":
    main()
