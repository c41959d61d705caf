"""Time the numba kernels against the pure-Python fallback.

    python benchmarks/bench_backends.py [--repeat 3] [--quick]

Each workload runs once per backend to warm up (numba compiles or loads its
cache), then ``--repeat`` more times; the best wall time is reported along
with the max abs difference between backend outputs.
"""

import argparse
import time

import numpy as np

from codipas import accel
from codipas.dynamics import DynamicsSystem, OdeState, integrate
from codipas.game import GameSpec, NoiseModel
from codipas.harness import Experiment, run_episode
from codipas.learners import LearnerConfig
from codipas.oracle import solve_logit

M = [[5.0, 2.0], [1.0, 3.0]]


def episode(horizon):
    spec = GameSpec(M, noise=NoiseModel.uniform(-1, 1))
    exp = Experiment(spec, LearnerConfig("CRL1"), LearnerConfig("CRL1"), horizon=horizon, record_stride=100)
    return lambda: run_episode(exp, 0).f[-1]


def ode(t_end):
    spec = GameSpec(M)
    system = DynamicsSystem("coupled_thm1", spec, 0.05)
    init = OdeState(np.array([0.5, 0.5]), np.array([0.5, 0.5]))
    return lambda: integrate(system, init, t_end, 1e-3, stride=1000).states[-1]


def logit():
    spec = GameSpec(np.arange(36, dtype=float).reshape(6, 6) % 7)
    return lambda: solve_logit(spec, 0.01).f_eps


def best_time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller workloads")
    args = ap.parse_args()
    scale = 10 if args.quick else 1
    work = {
        f"episode CRL1/CRL1, {100_000 // scale} steps": episode(100_000 // scale),
        f"RK4 coupled_thm1, {200 // scale} time units": ode(200 / scale),
        "logit equilibrium 6x6, eps=0.01": logit(),
    }
    if not accel.numba_available():
        print("numba not importable; only the numpy backend can run")
    print(f"{'workload':44s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s} {'max diff':>9s}")
    for name, fn in work.items():
        accel.set_backend("numpy")
        t_np, out_np = best_time(fn, args.repeat)
        if accel.numba_available():
            accel.set_backend("numba")
            t_nb, out_nb = best_time(fn, args.repeat)
            diff = float(np.max(np.abs(out_np - out_nb)))
            print(f"{name:44s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f} {diff:9.2e}")
        else:
            print(f"{name:44s} {t_np:10.4f} {'-':>10s}")


if __name__ == "__main__":
    main()
