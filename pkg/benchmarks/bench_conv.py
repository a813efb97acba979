"""Benchmark: compiled vs numpy conv kernels, and whole training epochs.

Run from the repo root after installing:

    python benchmarks/bench_conv.py

The backends share the surrounding matmuls; what differs is the im2col
gather and the col2im scatter-add, which dominate conv2d at desk scale.
"""

import time

import numpy as np

from padlab._kernels import _conv_np

try:
    from padlab._kernels import _conv_cy
except ImportError:
    _conv_cy = None

CASES = [
    # (batch, channels, spatial, filters)
    (128, 1, 8, 8),
    (128, 8, 8, 16),
    (128, 16, 4, 16),
    (64, 16, 16, 32),
]


def time_call(fn, *args, repeats=20):
    fn(*args)  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels():
    print(f"{'case':>22} {'im2col np':>12} {'im2col cy':>12} {'col2im np':>12} {'col2im cy':>12}")
    rng = np.random.default_rng(0)
    for n, c, hw, f in CASES:
        pad, kh = 1, 3
        hp = hw + 2 * pad
        ho = hp - kh + 1
        xp = np.ascontiguousarray(rng.standard_normal((n, c, hp, hp)))
        cols = np.ascontiguousarray(rng.standard_normal((n, c * 9, ho * ho)))

        t_np_g = time_call(_conv_np.im2col, xp, kh, kh, 1, ho, ho)
        t_np_s = time_call(_conv_np.col2im, cols, n, c, hp, hp, kh, kh, 1, ho, ho)
        if _conv_cy is not None:
            t_cy_g = time_call(_conv_cy.im2col, xp, kh, kh, 1, ho, ho)
            t_cy_s = time_call(_conv_cy.col2im, cols, n, c, hp, hp, kh, kh, 1, ho, ho)
            cy_g, cy_s = f"{t_cy_g*1e6:9.0f} us", f"{t_cy_s*1e6:9.0f} us"
        else:
            cy_g = cy_s = "   (absent)"
        label = f"{n}x{c}x{hw}x{hw} -> {f}"
        print(f"{label:>22} {t_np_g*1e6:9.0f} us {cy_g:>12} {t_np_s*1e6:9.0f} us {cy_s:>12}")


def bench_epoch():
    from padlab._kernels import BACKEND
    from padlab.autograd import SGD
    from padlab.datasets import make_tiny_images
    from padlab.models import build_smallcnn
    from padlab.noise import make_noisy_dataset
    from padlab.training import train_phase

    data = make_tiny_images(2000, 10, seed=0, n_test=100, pixel_noise=0.5)
    ds = make_noisy_dataset(data.train_x, data.train_y, 10, "symmetric", 0.4, seed=1)
    model = build_smallcnn([8, 16, 16], 10, (8, 8), seed=2)
    opt = SGD(model.trainable_parameters(), lr=0.05, momentum=0.9, weight_decay=1e-4)
    train_phase(model, ds, 1, None, opt, batch_size=128, seed=3)  # warm up
    t0 = time.perf_counter()
    train_phase(model, ds, 5, None, opt, batch_size=128, seed=3)
    per_epoch = (time.perf_counter() - t0) / 5
    print(f"\nactive backend: {BACKEND} "
          f"(set PADLAB_NO_EXTENSION=1 before launch to force numpy)")
    print(f"training epoch (N=2000, CNN 8-16-16, batch 128): {per_epoch*1e3:.1f} ms")


if __name__ == "__main__":
    bench_kernels()
    bench_epoch()
