#!/usr/bin/env python3
"""Compare the numba and numpy kernel lanes on the hot paths.

Usage: python benchmarks/bench_kernels.py [--events N] [--runs N]

Reports throughput for batch queries, clean-run replay, and attacked-run
evaluation, plus the speedup of the jitted lane.  Both lanes compute
bit-identical results; this only measures time.
"""

import argparse
import time

import numpy as np

import fetchguard as fg
from fetchguard import _kernels
from fetchguard.harness import (AttackModel, AttackSpec, AttackVariant,
                                ExperimentConfig, TraceMode, run_experiment)


def best_of(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--events", type=int, default=1 << 21)
    parser.add_argument("--runs", type=int, default=10_000)
    args = parser.parse_args()

    image = fg.gen_synthetic(1288, seed=1, name="bench-1288")
    checker = fg.install(image, fg.HscConfig.from_preset("PAPER_COMBINED", 1288))
    rng = np.random.default_rng(0)
    addrs = 4 * rng.integers(0, 1288, size=args.events, dtype=np.uint64)
    instrs = rng.integers(0, 1 << 32, size=args.events, dtype=np.uint64)

    lanes = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])
    if len(lanes) == 1:
        print("numba not importable; benchmarking the numpy lane only")

    def experiment(mode, runs_clean, runs_attacked):
        config = ExperimentConfig(
            image=image, preset="PAPER_COMBINED", trace_mode=mode,
            runs_clean=runs_clean, runs_attacked=runs_attacked,
            attack=AttackSpec(AttackModel.M1_ADDRESS,
                              AttackVariant.IN_IMAGE_ALIAS), seed=1)
        return lambda: run_experiment(config)

    cases = [
        (f"batch query ({args.events} events)",
         lambda: checker.check_batch(addrs, instrs), args.events),
        (f"clean replay ({args.runs} linear runs x 1288 events)",
         experiment(TraceMode.LINEAR, args.runs, 0), args.runs * 1288),
        (f"clean replay ({args.runs // 10} cfg-walk runs x 1288 events)",
         experiment(TraceMode.CFG_WALK, args.runs // 10, 0),
         args.runs // 10 * 1288),
        (f"attacked runs ({args.runs} injections)",
         experiment(TraceMode.LINEAR, 0, args.runs), args.runs),
    ]

    width = max(len(name) for name, _, _ in cases)
    results = {}
    for lane in lanes:
        _kernels.set_backend(lane)
        print(f"\n[{lane}]")
        for name, fn, unit_count in cases:
            fn()  # warm up (jit compile and caches)
            seconds = best_of(fn)
            results[(lane, name)] = seconds
            rate = unit_count / seconds / 1e6
            print(f"  {name:<{width}}  {seconds * 1e3:9.1f} ms  "
                  f"{rate:8.2f} M units/s")
    _kernels.set_backend("auto")

    if len(lanes) == 2:
        print("\nnumba speedup over numpy:")
        for name, _, _ in cases:
            ratio = results[("numpy", name)] / results[("numba", name)]
            print(f"  {name:<{width}}  {ratio:5.1f}x")


if __name__ == "__main__":
    main()
