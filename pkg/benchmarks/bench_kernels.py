"""Benchmark the compiled kernel backend against the NumPy fallback.

Times the primitive convolution/pooling kernels on network-sized
tensors and one full training step of the desk-preset network, printing
a per-backend table.  Run as:

    python benchmarks/bench_kernels.py [--repeats 20]
"""

import argparse
import time

import numpy as np

from snapspec.netunmix import ArchConfig, TrainConfig, build_network, kernels, train
from snapspec.pipeline import build_training_pairs
from snapspec.scene import synth_random_scene
from snapspec.smatrix import build_smatrix


def timeit(fn, repeats):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats * 1e3  # ms


def bench_primitives(repeats):
    rng = np.random.default_rng(0)
    cases = {
        "conv3x3 8->16 @32^2 fwd": lambda: kernels.conv2d_forward(
            x_conv, k_conv, b_conv, (1, 1), (1, 1)
        ),
        "conv3x3 8->16 @32^2 bwd": lambda: kernels.conv2d_backward(
            x_conv, k_conv, gy_conv, (1, 1), (1, 1)
        ),
        "convT3x3 s2 16->8 @16^2 fwd": lambda: kernels.convt2d_forward(
            x_convt, k_convt, b_convt, (2, 2), (1, 1), (1, 1)
        ),
        "convT3x3 s2 16->8 @16^2 bwd": lambda: kernels.convt2d_backward(
            x_convt, k_convt, gy_convt, (2, 2), (1, 1), (1, 1)
        ),
        "maxpool2x2 @32^2 fwd": lambda: kernels.maxpool2x2_forward(x_pool),
    }
    x_conv = rng.standard_normal((8, 8, 32, 32))
    k_conv = rng.standard_normal((16, 8, 3, 3))
    b_conv = np.zeros(16)
    gy_conv = rng.standard_normal((8, 16, 32, 32))
    x_convt = rng.standard_normal((8, 16, 16, 16))
    k_convt = rng.standard_normal((16, 8, 3, 3))
    b_convt = np.zeros(8)
    gy_convt = rng.standard_normal((8, 8, 32, 32))
    x_pool = rng.standard_normal((8, 8, 32, 32))

    rows = {}
    for backend in kernels.available_backends():
        kernels.set_backend(backend)
        rows[backend] = {name: timeit(fn, repeats) for name, fn in cases.items()}
    kernels.set_backend("auto")
    return rows


def bench_train_step():
    code = build_smatrix(31)
    scenes = [synth_random_scene(31, 8, blobs=3, seed=s) for s in range(8)]
    pairs = build_training_pairs(scenes, code)
    cfg = TrainConfig(lr=1e-3, batch_size=8, epochs=1, seed=0)
    rows = {}
    for backend in kernels.available_backends():
        kernels.set_backend(backend)
        t0 = time.perf_counter()
        train(pairs, cfg, arch=ArchConfig.desk(8))
        rows[backend] = (time.perf_counter() - t0) * 1e3
    kernels.set_backend("auto")
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    print(f"available backends: {', '.join(kernels.available_backends())}\n")
    prim = bench_primitives(args.repeats)
    names = list(next(iter(prim.values())))
    width = max(len(n) for n in names)
    header = f"{'kernel':<{width}}" + "".join(f"{b:>12}" for b in prim)
    print(header)
    print("-" * len(header))
    for name in names:
        print(f"{name:<{width}}" + "".join(f"{prim[b][name]:>10.2f}ms" for b in prim))

    step = bench_train_step()
    print(f"\n{'desk train epoch (8 scenes)':<{width}}"
          + "".join(f"{step[b]:>10.1f}ms" for b in step))


if __name__ == "__main__":
    main()
