#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 30]

The numba path is what ships by default; the numpy path is what you get with
OWSGG_NUMBA=0. Sizes mirror a busy image: a few dozen instances, a depth map
at camera resolution, and metric matching over a full image batch.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from owsgg import kernels


def bench(fn, args, repeat):
    fn(*args)  # warm-up (and JIT compile for the numba path)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=30)
    args = parser.parse_args()

    if not kernels.HAS_NUMBA:
        raise SystemExit("numba path unavailable (OWSGG_NUMBA=0 or numba missing); nothing to compare")

    rng = np.random.RandomState(0)

    n_boxes = 400
    x1 = rng.uniform(0, 1800, n_boxes)
    y1 = rng.uniform(0, 1000, n_boxes)
    boxes = np.stack([x1, y1, x1 + rng.uniform(5, 120, n_boxes), y1 + rng.uniform(5, 120, n_boxes)], axis=1)

    n_inst = 60
    centers = rng.uniform(0, 1920, (n_inst, 2))
    depths = rng.uniform(0, 1, n_inst)

    depth_map = rng.uniform(0, 1, (1080, 1920))
    inst_boxes = boxes[:n_inst] * np.array([1920 / 1920, 1080 / 1080, 1, 1])
    inst_boxes = np.clip(inst_boxes, 0, [1919, 1079, 1920, 1080])
    inst_boxes[:, 2] = np.maximum(inst_boxes[:, 2], inst_boxes[:, 0] + 1)
    inst_boxes[:, 3] = np.maximum(inst_boxes[:, 3], inst_boxes[:, 1] + 1)

    dist = kernels.pair_distance_matrix(centers, depths, 2202.9, 1.0, 1.5)

    cases = [
        ("iou_matrix (400x400 boxes)", "iou_matrix", (boxes, boxes)),
        ("pair_distance_matrix (60 instances)", "pair_distance_matrix", (centers, depths, 2202.9, 1.0, 1.5)),
        ("box_median_depth (60 boxes on 1080p map)", "box_median_depth", (depth_map, inst_boxes)),
        ("sigmoid_gate_matrix (60x60)", "sigmoid_gate_matrix", (dist, 0.5, 16.0)),
    ]

    print(f"{'kernel':<44} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for label, name, call_args in cases:
        t_np = bench(kernels.IMPLEMENTATIONS[name]["numpy"], call_args, args.repeat)
        t_nb = bench(kernels.IMPLEMENTATIONS[name]["numba"], call_args, args.repeat)
        print(f"{label:<44} {t_np * 1e3:>10.3f}ms {t_nb * 1e3:>10.3f}ms {t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
