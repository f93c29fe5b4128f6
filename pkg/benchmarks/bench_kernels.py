#!/usr/bin/env python3
"""Benchmark the array kernels: compiled extension vs NumPy fallback.

Measures the two hot operations (truncated-Gaussian deposit and the
16-corner score) plus the end-to-end pipeline frame rate under each
backend.  Run from the repository root:

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from atrium.normality import BACKENDS, GridTransform, NormalityArray, TrajectoryStep
from atrium.pipeline import PipelineConfig, run
from atrium.simulator import AgentKind, AgentScript, SceneConfig, generate

TRANSFORM = GridTransform(0.0, 20.0, 0.0, 20.0, 2.5)
N_OPS = 20_000


def random_steps(rng, n):
    return [
        TrajectoryStep(
            x=rng.uniform(0, 20), y=rng.uniform(0, 20),
            vx=rng.uniform(-2.5, 2.5), vy=rng.uniform(-2.5, 2.5), t=0.0,
        )
        for _ in range(n)
    ]


def bench_splat(backend, steps):
    arr = NormalityArray(TRANSFORM, backend=backend)
    t0 = time.perf_counter()
    for s in steps:
        arr.deposit(s)
    return time.perf_counter() - t0


def bench_score(backend, steps):
    arr = NormalityArray(TRANSFORM, backend=backend)
    for s in steps[:200]:
        arr.deposit(s)
    t0 = time.perf_counter()
    for s in steps:
        arr.step_normality(s)
    return time.perf_counter() - t0


def bench_pipeline(backend):
    agents = [
        AgentScript(
            kind=AgentKind.WALKER, spawn_time=0.0, speed=1.2 + 0.01 * i,
            waypoints=[(1.0, 1.0 + 0.35 * i), (19.0, 1.0 + 0.35 * i)] * 3,
        )
        for i in range(50)
    ]
    frames, _ = generate(SceneConfig(seed=3), agents, 40.0)
    cfg = PipelineConfig(backend=backend)
    report = run(frames, cfg)
    return report.fps


def main():
    rng = np.random.default_rng(0)
    steps = random_steps(rng, N_OPS)
    rows = []
    for backend in sorted(BACKENDS):
        t_splat = bench_splat(backend, steps)
        t_score = bench_score(backend, steps)
        fps = bench_pipeline(backend)
        rows.append((backend, N_OPS / t_splat, N_OPS / t_score, fps))

    print(f"{'backend':<10} {'deposits/s':>12} {'scores/s':>12} {'pipeline fps':>14}")
    for backend, splat_rate, score_rate, fps in rows:
        print(f"{backend:<10} {splat_rate:>12.0f} {score_rate:>12.0f} {fps:>14.0f}")
    if len(rows) == 2:
        py = next(r for r in rows if r[0] == "python")
        cy = next(r for r in rows if r[0] == "cython")
        print(
            f"\nspeedup (cython/python): deposits x{cy[1] / py[1]:.1f}, "
            f"scores x{cy[2] / py[2]:.1f}, pipeline x{cy[3] / py[3]:.2f}"
        )


if __name__ == "__main__":
    main()
