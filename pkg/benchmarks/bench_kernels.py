"""Time each hot kernel on its numba path and on the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from windplan import kernels
from windplan.genmodel import expected_kl, make_preferences, softmax
from windplan.gridworld import DEFAULT_GEOMETRY, make_environment


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def workloads():
    env = make_environment(DEFAULT_GEOMETRY.with_stochasticity("high"))
    succ, cum = env.compact
    rng = np.random.default_rng(0)
    kl = expected_kl(env.transitions, make_preferences(env.goal, 1e-16, 70))
    T, n = 20, 1000
    cum_pol = kernels.cumulative_policy(softmax(-rng.random((T, 70, 8)) * 3))
    u_act, u_env = rng.random((n, T)), rng.random((n, T))
    u_q = rng.random((20_000, 3))
    u_x = rng.random((10_000, 3))

    def explore(flag):
        counts = np.full((70, 70, 8), 1 / 70)
        kernels.explore(succ, cum, env.start, env.goal, 20, True, u_x, counts, use_numba=flag)

    return {
        "efe_backward (T=20)": lambda f: kernels.efe_backward(env.transitions, kl, T, use_numba=f),
        "rollout (1000 x T=20)": lambda f: kernels.rollout(cum_pol, env.obs_map, succ, cum, env.start, env.goal, T,
                                                          u_act, u_env, use_numba=f),
        "q_train (20K steps)": lambda f: kernels.q_train(succ, cum, env.obs_map, 70, env.start, env.goal, 20, 0.1, 0.5,
                                                        1.0, u_q, use_numba=f),
        "explore (10K steps)": explore,
    }


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    print(f"{'kernel':<24} {'numba ms':>10} {'numpy ms':>10} {'speed-up':>9}")
    for name, fn in workloads().items():
        fn(True)  # compile / load cache
        nb = best_of(lambda: fn(True), args.repeat)
        py = best_of(lambda: fn(False), args.repeat)
        print(f"{name:<24} {nb * 1e3:>10.3f} {py * 1e3:>10.3f} {py / nb:>8.1f}x")


if __name__ == "__main__":
    main()
