"""Benchmark the numba-compiled kernels against their pure-numpy fallbacks.

Usage: python3 bench/benchmark_kernels.py [--repeats N] [--seed S]

Both paths are imported from docharmonize._kernels and timed on the same
inputs; results are cross-checked for equality before timing. When numba is
unavailable (or DOCHARMONIZE_DISABLE_NUMBA is set) only the fallback column
is reported.
"""

import argparse
import time

import numpy as np

from docharmonize import _kernels


def _time(fn, args, repeats):
    fn(*args)  # warm-up (and JIT compilation for the numba path)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def workloads(rng):
    a = rng.integers(0, 30, size=400).astype(np.int64)
    b = rng.integers(0, 30, size=400).astype(np.int64)
    x = np.ascontiguousarray(rng.normal(size=(800, 16)))
    boxes_a = np.ascontiguousarray(rng.uniform(0, 900, size=(500, 2)))
    boxes_a = np.hstack([boxes_a, boxes_a + rng.uniform(5, 100, size=(500, 2))])
    boxes_b = np.ascontiguousarray(rng.uniform(0, 900, size=(600, 2)))
    boxes_b = np.hstack([boxes_b, boxes_b + rng.uniform(5, 100, size=(600, 2))])
    return [
        ("levenshtein 400x400", _kernels._levenshtein_loop,
         _kernels._levenshtein_numpy, (a, b)),
        ("pairwise_sq_dists 800x16", _kernels._pairwise_sq_dists_loop,
         _kernels._pairwise_sq_dists_numpy, (x,)),
        ("iou_matrix 500x600", _kernels._iou_matrix_loop,
         _kernels._iou_matrix_numpy, (boxes_a, boxes_b)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    rows = []
    for name, loop_impl, numpy_impl, inputs in workloads(rng):
        numpy_result = np.asarray(numpy_impl(*inputs))
        if _kernels.NUMBA_ENABLED:
            from numba import njit

            compiled = njit(cache=True)(loop_impl)
            assert np.allclose(np.asarray(compiled(*inputs)), numpy_result, atol=1e-9)
            t_numba = _time(compiled, inputs, args.repeats)
        else:
            t_numba = None
        t_numpy = _time(numpy_impl, inputs, args.repeats)
        rows.append((name, t_numba, t_numpy))

    header = f"{'kernel':<28}{'numba (s)':>12}{'numpy (s)':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, t_numba, t_numpy in rows:
        if t_numba is None:
            print(f"{name:<28}{'n/a':>12}{t_numpy:>12.5f}{'n/a':>10}")
        else:
            print(f"{name:<28}{t_numba:>12.5f}{t_numpy:>12.5f}"
                  f"{t_numpy / t_numba:>9.1f}x")
    if not _kernels.NUMBA_ENABLED:
        print("\nnumba path unavailable (not installed or disabled via "
              "DOCHARMONIZE_DISABLE_NUMBA); only the fallback was timed.")


if __name__ == "__main__":
    main()
