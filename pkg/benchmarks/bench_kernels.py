"""Compare the numba kernels with their pure python/numpy fallbacks.

    python benchmarks/bench_kernels.py [--duration 5] [--cells 40] [--repeat 3]

The first numba call per kernel includes compilation (or a cache load) and is
reported separately.
"""
import argparse
import time

import numpy as np

from predictive_cacc import _jit, presets
from predictive_cacc.sim import simulate
from predictive_cacc.stability import sweep_alpha_b


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - start)
    return min(times), result


def with_backend(use_numba, fn):
    saved = _jit.USE_NUMBA
    _jit.USE_NUMBA = use_numba
    try:
        return fn()
    finally:
        _jit.USE_NUMBA = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration", type=float, default=5.0, help="simulated seconds of the five-vehicle run")
    ap.add_argument("--cells", type=int, default=40, help="alpha and b steps of the margin sweep")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _jit.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    cfg, _ = presets.get("fig4")
    cfg.duration = args.duration
    v, G = presets.table_vehicles(), presets.table_gains()
    alphas = np.linspace(0.5, 20, args.cells)
    bs = np.linspace(0.5, 30, args.cells)

    cases = {
        f"simulate fig4, {args.duration:g} s": lambda: simulate(cfg).speed,
        f"alpha-b margin sweep, {args.cells}x{args.cells}": lambda: sweep_alpha_b(v[1], v[0], G[1], alphas, bs).margin,
    }
    print(f"{'case':<34}{'first numba':>13}{'numba':>11}{'fallback':>11}{'speedup':>9}  max diff")
    for name, fn in cases.items():
        start = time.perf_counter()
        with_backend(True, fn)
        first = time.perf_counter() - start
        t_fast, r_fast = with_backend(True, lambda: best_of(fn, args.repeat))
        t_slow, r_slow = with_backend(False, lambda: best_of(fn, 1))
        diff = float(np.max(np.abs(r_fast - r_slow)))
        print(f"{name:<34}{first:>12.3f}s{t_fast:>10.3f}s{t_slow:>10.3f}s{t_slow / t_fast:>8.1f}x  {diff:.1e}")


if __name__ == "__main__":
    main()
