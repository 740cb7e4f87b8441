"""Compare the compiled and pure-Python kernels.

    python3 benchmarks/bench_kernels.py --episodes 300 --repeat 3
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from temple import _pykernels, kernels
from temple.environments import TaskDistribution, maze_task, sample_task
from temple.learners import RMaxLearner, run_episodes


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_advance(backend, task, episodes, steps):
    S, A = task.mdp.num_states, task.mdp.num_actions

    def go():
        learner = RMaxLearner(S, A, threshold=500)
        run_episodes(task, learner, episodes, steps, np.random.default_rng(0),
                     small_threshold=50, backend=backend)

    return go


def bench_sweeps(backend, P, R, gamma):
    def go():
        V = np.zeros(P.shape[0])
        backend.bellman_sweeps(P, R, gamma, 1e-6, 100_000, V)

    return go


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--episodes", type=int, default=300)
    p.add_argument("--steps", type=int, default=30)
    p.add_argument("--size", type=int, default=6)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    dist = TaskDistribution("landform", seed=0, width=args.size, height=args.size)
    task = maze_task(sample_task(dist, 0))
    backends = {"python": _pykernels}
    if kernels.BACKEND == "cython":
        backends["cython"] = kernels.get_backend("cython")
    else:
        print("compiled kernels unavailable; timing the fallback only")

    m = task.mdp
    rows = []
    for name, mod in backends.items():
        t_adv = best_of(bench_advance(mod, task, args.episodes, args.steps), args.repeat)
        t_vi = best_of(bench_sweeps(mod, m.transition, m.reward, m.discount), args.repeat)
        rows.append((name, t_adv, t_vi))

    steps = args.episodes * args.steps
    print(f"{args.size}x{args.size} maze, {steps} environment steps, best of {args.repeat}")
    print(f"{'backend':8s} {'interaction s':>14s} {'steps/s':>12s} {'value iter s':>13s}")
    for name, t_adv, t_vi in rows:
        print(f"{name:8s} {t_adv:14.4f} {steps / t_adv:12.0f} {t_vi:13.5f}")
    if len(rows) == 2:
        print(f"speed-up: interaction {rows[0][1] / rows[1][1]:.1f}x, "
              f"value iteration {rows[0][2] / rows[1][2]:.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
