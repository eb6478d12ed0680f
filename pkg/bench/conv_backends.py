"""Benchmark the conv kernels: compiled extension vs numpy fallback.

Times the three backend entry points (forward, input gradient, weight
gradient) at encoder-like shapes for both backends and prints the
speedups. Run as:

    python3 bench/conv_backends.py [--repeats N] [--dtype float32]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from gsegan.nn import backend

# (label, batch, c_in, length, c_out, kernel, stride) roughly tracking
# the encoder pyramid at full width and the 1/16-scale smoke setup
SHAPES = [
    ("enc1 full", 4, 1, 16384, 64, 31, 4),
    ("enc3 full", 4, 128, 1024, 256, 31, 4),
    ("enc5 full", 4, 512, 64, 1024, 31, 4),
    ("enc1 smoke", 16, 1, 16384, 4, 31, 4),
    ("enc3 smoke", 16, 8, 1024, 16, 31, 4),
]


def time_case(b, ci, length, co, k, s, dtype, repeats):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((b, ci, length)).astype(dtype)
    w = rng.standard_normal((co, ci, k)).astype(dtype)
    n_out = -(-length // s)
    dy = rng.standard_normal((b, co, n_out)).astype(dtype)

    def run_once():
        _, xp = backend.conv_forward(x, w, s)
        backend.conv_backward_input(dy, w, s, length)
        backend.conv_backward_weight(dy, xp, s, k)

    run_once()  # warm caches before timing
    t0 = time.perf_counter()
    for _ in range(repeats):
        run_once()
    return (time.perf_counter() - t0) / repeats


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--dtype", choices=["float32", "float64"],
                    default="float32")
    args = ap.parse_args()
    dtype = np.dtype(args.dtype)

    have_compiled = backend._core is not None
    print(f"active backend: {backend.BACKEND}  dtype: {dtype.name}  "
          f"repeats: {args.repeats}")
    if not have_compiled:
        print("compiled extension not built; timing the numpy fallback only")

    header = f"{'case':<12} {'numpy [ms]':>12}"
    if have_compiled:
        header += f" {'compiled [ms]':>14} {'speedup':>8}"
    print(header)
    saved = backend._core
    for label, b, ci, length, co, k, s in SHAPES:
        backend._core = None
        t_np = time_case(b, ci, length, co, k, s, dtype, args.repeats)
        row = f"{label:<12} {t_np * 1e3:>12.2f}"
        if have_compiled:
            backend._core = saved
            t_c = time_case(b, ci, length, co, k, s, dtype, args.repeats)
            row += f" {t_c * 1e3:>14.2f} {t_np / t_c:>8.2f}x"
        print(row)
    backend._core = saved
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
