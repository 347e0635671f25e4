"""Compare the compiled and pure-Python ORCA kernels on circle-crossing crowds.

Both backends run the same rollouts; the script checks that the
trajectories agree and reports steps per second for each.

Usage::

    python benchmarks/bench_orca.py --agents 5 10 20 --steps 100 --repeats 3
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from samarl.pedestrian import BACKEND, simulate_crowd


def crossing(n: int, seed: int, radius: float = 5.0) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    # spread evenly with jitter so agents never start overlapping
    ang = 2 * math.pi * np.arange(n) / n + rng.uniform(-0.3, 0.3, n) * math.pi / n
    pos = radius * np.column_stack([np.cos(ang), np.sin(ang)])
    return pos, -pos


def time_backend(backend: str, n: int, steps: int, repeats: int) -> tuple[float, np.ndarray]:
    pos, goals = crossing(n, seed=n)
    rad, vp = np.full(n, 0.3), np.ones(n)
    best = math.inf
    traj = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        traj = simulate_crowd(pos, goals, rad, vp, steps, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, traj


def main(argv: list[str] | None = None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--agents", type=int, nargs="+", default=[5, 10, 20])
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--repeats", type=int, default=3)
    args = p.parse_args(argv)

    print(f"active backend: {BACKEND}")
    print(f"{'agents':>6} {'python steps/s':>15} {'compiled steps/s':>17} {'speedup':>8} {'max |dx|':>10}")
    for n in args.agents:
        t_py, traj_py = time_backend("python", n, args.steps, args.repeats)
        t_c, traj_c = time_backend("compiled", n, args.steps, args.repeats)
        diff = float(np.max(np.abs(traj_py - traj_c)))
        print(f"{n:>6d} {args.steps / t_py:>15.1f} {args.steps / t_c:>17.1f} {t_py / t_c:>8.1f} {diff:>10.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
