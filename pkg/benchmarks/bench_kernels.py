"""Benchmark the numba and numpy integration kernels against each other.

Workload: the five-agent 2DOF benchmark network (30 states), 60 s at
dt = 1e-3, deterministic and with white measurement noise.  Run with

    python benchmarks/bench_kernels.py [--steps N] [--repeat R]
"""

import argparse
import time

import numpy as np

from agreelab import _kernels
from agreelab.design import FilterParams, make_filter
from agreelab.graph import Graph
from agreelab.lti import RationalTF
from agreelab.protocol import AgentModel, TwoDofConfig, build_2dof
from agreelab.sim import rk4_transition


def build_workload(nsteps: int):
    dart = Graph(5, [(1, 2), (1, 3), (1, 4), (1, 5), (2, 3), (2, 4)])
    integrator = RationalTF([1.0], [0.0, 1.0])
    fd0 = RationalTF([-16.0, -7.586], [0.4143, 1.0])
    fa = make_filter(FilterParams(3.0, 5.0, 2.0))
    loop = build_2dof(dart, [AgentModel(integrator, fd0)] * 5, TwoDofConfig(fa))
    sys = loop.dynamics
    dt = 1e-3
    phi, gamma = rk4_transition(sys.A, dt)
    rng = np.random.default_rng(0)
    g = np.zeros((nsteps, sys.nstates))
    x0 = loop.x0_map @ np.array([1.5, 0.75, 0.0, -0.75, -1.5])
    bn = np.ascontiguousarray(sys.B[:, 5:])
    w = rng.standard_normal((nsteps, 5)) * np.sqrt(0.05 * dt)
    return phi, g, x0, bn, w


def timeit(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=60_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    phi, g, x0, bn, w = build_workload(args.steps)
    limit = 1e9
    rows = []

    rows.append(
        (
            "deterministic path (numpy)",
            timeit(lambda: _kernels.affine_path_numpy(phi, g, x0, limit), args.repeat),
        )
    )
    rows.append(
        (
            "stochastic path (numpy)",
            timeit(
                lambda: _kernels.affine_path_noise_numpy(phi, g, bn, w, x0, limit),
                args.repeat,
            ),
        )
    )
    if _kernels.HAVE_NUMBA:
        _kernels.affine_path_numba(phi, g[:10], x0, limit)  # compile
        _kernels.affine_path_noise_numba(phi, g[:10], bn, w[:10], x0, limit)
        rows.append(
            (
                "deterministic path (numba)",
                timeit(lambda: _kernels.affine_path_numba(phi, g, x0, limit), args.repeat),
            )
        )
        rows.append(
            (
                "stochastic path (numba)",
                timeit(
                    lambda: _kernels.affine_path_noise_numba(phi, g, bn, w, x0, limit),
                    args.repeat,
                ),
            )
        )
    else:
        print("numba not available; numpy fallback only")

    print(f"workload: {args.steps} steps, {x0.size} states, best of {args.repeat}")
    base = {"deterministic": None, "stochastic": None}
    for name, seconds in rows:
        kind = name.split()[0]
        speedup = ""
        if "numpy" in name:
            base[kind] = seconds
        elif base[kind]:
            speedup = f"  ({base[kind] / seconds:.1f}x vs numpy)"
        rate = args.steps / seconds / 1e6
        print(f"{name:30s} {seconds * 1e3:9.2f} ms   {rate:6.2f} Msteps/s{speedup}")


if __name__ == "__main__":
    main()
