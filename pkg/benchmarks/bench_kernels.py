"""Compare the numba kernels with the pure-numpy fallback.

Times three hot paths on Garnet instances of growing size:

* one robust Bellman support sweep over all (s, a) pairs,
* a full robust policy evaluation to tolerance 1e-10,
* a robust TD run (the fallback here is the same loop interpreted by Python,
  since a stochastic-approximation chain cannot be vectorized).

Compilation happens once before timing. Usage::

    python3 benchmarks/bench_kernels.py --sizes 10 50 200 --repeat 5
"""

import argparse
import time

import numpy as np

from robustmdp import _kernels as K
from robustmdp import build_garnet
from robustmdp.robust_eval import _stop_threshold, iteration_cap
from robustmdp.rtd import sample_trajectory


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_instance(n_states, n_actions, repeat, rtd_steps):
    b = build_garnet(n_states, n_actions, min(n_states, 5), 0.9, "l1ball", 0.2, seed=0)
    mdp, spec = b.mdp, b.spec
    pi = np.full((n_states, n_actions), 1.0 / n_actions)
    v = np.random.default_rng(1).normal(size=n_states)
    cost = np.ascontiguousarray(mdp.cost)
    v0 = np.zeros(n_states)
    thresh = _stop_threshold(mdp, 1e-10)
    cap = iteration_cap(mdp.gamma, 1e-10, float(np.max(np.abs(cost))))

    vals = np.empty((n_states, n_actions))
    pstar = np.empty(spec.nominal.shape)

    def sweep_jit():
        K.support_sweep_loop(*spec.arrays, v, vals, pstar)

    def sweep_numpy():
        K.support_sweep_numpy(spec.plan, v)

    def eval_jit():
        K.robust_eval_loop(cost, pi, mdp.gamma, *spec.arrays, v0, thresh, cap)

    def eval_numpy():
        K.robust_eval_numpy(spec.plan, cost, pi, mdp.gamma, v0, thresh, cap)

    traj = sample_trajectory(mdp, pi, rtd_steps, seed=0)
    ref = np.zeros((n_states, n_actions))
    trace = np.empty(0)

    def rtd(loop):
        theta = np.zeros((n_states, n_actions))
        loop(traj, cost, pi, mdp.gamma, 0.01, 0, *spec.arrays, theta, ref, 0, trace)

    rows = []
    for name, jit_fn, np_fn in (
        ("support sweep", sweep_jit, sweep_numpy),
        ("robust evaluation", eval_jit, eval_numpy),
        (f"robust TD ({rtd_steps} steps)", lambda: rtd(K.rtd_loop),
         lambda: rtd(getattr(K.rtd_loop, "py_func", K.rtd_loop))),
    ):
        jit_fn()  # compile
        t_jit = best_of(jit_fn, repeat)
        t_np = best_of(np_fn, max(1, repeat // 2) if "TD" in name else repeat)
        rows.append((name, t_jit, t_np))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[10, 50, 200])
    parser.add_argument("--actions", type=int, default=4)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--rtd-steps", type=int, default=20_000)
    args = parser.parse_args()

    if not K.JIT_ENABLED:
        print("numba is disabled (ROBUSTMDP_NUMBA=0 or not installed); both columns use the fallback")
    print(f"{'states':>6}  {'kernel':<26} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for n in args.sizes:
        for name, t_jit, t_np in bench_instance(n, args.actions, args.repeat, args.rtd_steps):
            print(f"{n:>6}  {name:<26} {t_jit * 1e3:>10.3f} {t_np * 1e3:>10.3f} {t_np / t_jit:>8.1f}x")


if __name__ == "__main__":
    main()
