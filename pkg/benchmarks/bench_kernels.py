#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-NumPy fallback.

Times the capped proportional split and the dual subgradient chunk on
representative sizes, then one end-to-end dual solve per backend.

Usage: python benchmarks/bench_kernels.py
"""
import math
import time

import numpy as np

from capgame import _kernels_py
from capgame.instance_io import random_instance

try:
    from capgame import _kernels_cy
except ImportError:
    _kernels_cy = None


def timeit(fn, min_time=0.2):
    fn()
    reps = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(reps):
            fn()
        elapsed = time.perf_counter() - t0
        if elapsed >= min_time:
            return elapsed / reps
        reps = max(reps * 2, int(reps * min_time / max(elapsed, 1e-9)))


def bench_waterfill(kernels, n, seed=0):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.1, 5.0, n)
    caps = np.where(rng.random(n) < 0.5, rng.uniform(0.1, 3.0, n), np.inf)
    return timeit(lambda: kernels.waterfill(w, caps, 10.0))


def bench_dual_chunk(kernels, num_links, num_flows, iters, seed=0):
    inst = random_instance(
        num_links, num_flows, 0.5, (10.0, 100.0), 0.5, seed=seed
    )
    links, flows = np.nonzero(inst.routing)
    links = links.astype(np.int64)
    flows = flows.astype(np.int64)
    caps = np.full(num_flows, np.inf)
    np.minimum.at(caps, flows, inst.capacities[links])

    def run():
        lam = np.full(num_links, 0.1)
        kernels.dual_chunk(
            links, flows, inst.capacities, inst.flow_weights, 0.5, caps,
            lam, np.zeros(num_flows), 0, iters, 0.01, math.inf, lam.copy(),
        )

    return timeit(run) / iters


def bench_dual_solve(backend_module):
    import capgame._backend as backend
    import capgame.oracle as oracle

    saved = backend.dual_chunk, oracle.dual_chunk
    backend.dual_chunk = oracle.dual_chunk = backend_module.dual_chunk
    try:
        inst = random_instance(100, 200, 0.5, (10.0, 100.0), 0.5, seed=2026)
        t0 = time.perf_counter()
        result = oracle.dual_solve(inst, tol=1e-4, max_iter=300_000)
        elapsed = time.perf_counter() - t0
        assert result.converged
        return elapsed
    finally:
        backend.dual_chunk, oracle.dual_chunk = saved


def main():
    backends = [("python", _kernels_py)]
    if _kernels_cy is not None:
        backends.append(("compiled", _kernels_cy))
    else:
        print("compiled backend unavailable; showing the fallback only\n")

    rows = []
    for label, size in [("waterfill n=4", 4), ("waterfill n=32", 32), ("waterfill n=256", 256)]:
        timings = [bench_waterfill(mod, size) for _, mod in backends]
        rows.append((label, timings, "us", 1e6))
    for label, shape in [("dual step 5x8", (5, 8)), ("dual step 100x200", (100, 200))]:
        timings = [
            bench_dual_chunk(mod, shape[0], shape[1], iters=500) for _, mod in backends
        ]
        rows.append((label, timings, "us/iter", 1e6))
    timings = [bench_dual_solve(mod) for _, mod in backends]
    rows.append(("dual solve 100x200", timings, "s", 1.0))

    names = [name for name, _ in backends]
    width = max(len(r[0]) for r in rows) + 2
    header = "kernel".ljust(width) + "".join(f"{n:>14}" for n in names)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for label, timings, unit, scale in rows:
        line = label.ljust(width)
        for t in timings:
            line += f"{t * scale:>11.3f} {unit[:2]}"
        if len(timings) == 2:
            line += f"{timings[0] / timings[1]:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
