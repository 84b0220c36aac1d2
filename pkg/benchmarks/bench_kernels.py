#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Times the terrain kernels on one large DEM and the per-step sweeps
(water balance + routing) on a square basin, then prints per-kernel
timings and speedups.

    python benchmarks/bench_kernels.py --size 400 --steps 50
"""

import argparse
import time

import numpy as np

from basinflow._kernels import pure

try:
    from basinflow._kernels import _speed as speed
except ImportError:
    speed = None


def timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def build_inputs(size, seed):
    rng = np.random.default_rng(seed)
    rr, cc = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    cheb = np.maximum(np.abs(rr - size + 1), np.abs(cc - size + 1))
    values = 10.0 * cheb + rng.uniform(0.0, 1.0, size=(size, size))
    valid = np.ones((size, size), dtype=bool)
    return rng, values, valid


def bench_backend(backend, size, steps, repeat, seed=7):
    rng, values, valid = build_inputs(size, seed)
    results = {}

    results["flow_directions"] = timeit(
        lambda: backend.flow_directions(values, valid), repeat)
    codes = backend.flow_directions(values, valid)
    results["accumulate"] = timeit(lambda: backend.accumulate(codes), repeat)
    results["delineate"] = timeit(
        lambda: backend.delineate(codes, size - 1, size - 1), repeat)

    n = size * size
    w = rng.uniform(0.0, 100.0, size=n)
    precip = rng.uniform(0.0, 10.0, size=n)
    pet = rng.uniform(0.0, 2.0, size=n)

    def wb_sweep():
        ww = w
        for _ in range(steps):
            ww = backend.wb_grid_step(ww, precip, pet, 100.0, 2.0, 0.1,
                                      0.7, 20.0, 3600.0)[0]

    results[f"wb_grid_step x{steps}"] = timeit(wb_sweep, repeat)

    surface = rng.uniform(0.0, 20.0, size=(size, size))
    subsurface = rng.uniform(0.0, 2.0, size=(size, size))
    channel = rng.random((size, size)) > 0.7
    member = np.ones((size, size), dtype=bool)

    def route_sweep():
        surf, sub = surface, subsurface
        for _ in range(steps):
            surf, sub, _ = backend.route_step(
                surf, sub, codes, channel, member,
                1.5, 0.6, 2.0, 0.2, 0.1, 3600.0, 1000.0)

    results[f"route_step x{steps}"] = timeit(route_sweep, repeat)
    return results


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--size", type=int, default=400, help="grid rows = cols")
    parser.add_argument("--steps", type=int, default=50,
                        help="sweep steps per timing sample")
    parser.add_argument("--repeat", type=int, default=3,
                        help="samples per kernel (best is reported)")
    args = parser.parse_args()

    print(f"grid {args.size}x{args.size}, {args.steps} sweep steps, "
          f"best of {args.repeat}")
    pure_times = bench_backend(pure, args.size, args.steps, args.repeat)
    if speed is None:
        print("compiled backend not built (python setup.py build_ext --inplace)")
        speed_times = None
    else:
        speed_times = bench_backend(speed, args.size, args.steps, args.repeat)

    width = max(len(k) for k in pure_times)
    header = f"{'kernel':<{width}}  {'pure (s)':>10}  {'compiled (s)':>12}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, t_pure in pure_times.items():
        if speed_times is None:
            print(f"{name:<{width}}  {t_pure:>10.4f}  {'-':>12}  {'-':>8}")
        else:
            t_speed = speed_times[name]
            print(f"{name:<{width}}  {t_pure:>10.4f}  {t_speed:>12.4f}  "
                  f"{t_pure / t_speed:>7.1f}x")


if __name__ == "__main__":
    main()
