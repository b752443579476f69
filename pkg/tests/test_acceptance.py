"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS criterion N: ...`` or ``FAIL criterion N: ...``
line (visible without ``-s``) and then asserts. Runtimes exclude the one-off
numba compilation, which the module fixture triggers up front.

Run alone with ``pytest tests/test_acceptance.py -v`` or
``python3 tests/test_acceptance.py``.
"""

import math
import time

import numpy as np
import pytest

from robustmdp import build_counterexample, build_example1, build_garnet, build_graded_gap
from robustmdp.mdp import Policy, standard_value
from robustmdp.mirror import MirrorMap
from robustmdp.robust_eval import evaluate_robust, perf_diff_check, q_signal_check
from robustmdp.rtd import (
    RTDConfig,
    expected_operator,
    fixed_point_operator,
    operator_contraction_check,
    rtd_evaluate,
)
from robustmdp.solvers import (
    SolverConfig,
    StepsizeSchedule,
    pessimistic_constants,
    reference_optimum,
    rpmd_solve,
    rvi_solve,
    srpmd_solve,
)
from robustmdp.verify import (
    gradient_fd_sweep,
    monotone_step_sweep,
    perf_diff_sweep,
    q_signal_sweep,
    three_point_sweep,
)

GARNET_SEEDS = range(20)
RTD_POLICY = np.full((3, 2), 0.5)


def garnet(seed):
    return build_garnet(5, 3, 3, 0.9, "contamination", 0.2, seed=seed)


def rtd_instance():
    return build_garnet(3, 2, 3, 0.9, "contamination", 0.2, seed=0)


@pytest.fixture(scope="module", autouse=True)
def warm_jit():
    """Compile every kernel once so that timings measure steady-state work."""
    b = build_garnet(3, 2, 3, 0.9, "contamination", 0.2, seed=0)
    pi = np.full((3, 2), 0.5)
    evaluate_robust(b.mdp, b.spec, pi)
    rvi_solve(b.mdp, b.spec)
    for mode in ("known_u", "contamination"):
        rtd_evaluate(b.mdp, b.spec, pi, RTDConfig(steps=10, operator_mode=mode))
    b.spec.support_argmax(0, 0, np.zeros(3))


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        return ok
    return emit


def test_criterion_1_counterexample(report):
    t0 = time.perf_counter()
    C, g = 2.0, 0.5
    ce = build_counterexample(C, g)
    mdp, spec = ce.bundle.mdp, ce.bundle.spec
    ev_pi = evaluate_robust(mdp, spec, ce.pi, tol=1e-13)
    ev_star = evaluate_robust(mdp, spec, ce.pi_star, tol=1e-13)
    g2 = g * g
    expected = np.array([C / (1 - g2), 1 + g2 * C / (1 - g2), g * C / (1 - g2)])
    err = float(np.max(np.abs(ev_pi.v_r - expected)))
    pd = perf_diff_check(mdp, spec, ce.pi, ce.pi_star, ce.SC, ev_pi=ev_pi, ev_prime=ev_star)
    qs = q_signal_check(mdp, spec, ce.pi, ce.pi_star, ce.SC, ev_pi=ev_pi, ev_star=ev_star)
    elapsed = time.perf_counter() - t0
    ok = err <= 1e-9 and abs(pd.rhs) <= 1e-10 and pd.lhs < -1e-3 and qs.holds and elapsed < 1.0
    report(1, ok, f"value error {err:.2e}, perf-diff lhs {pd.lhs:.4f} rhs {pd.rhs:.1e}, "
                  f"q-signal slack {qs.slack:.4f}, {elapsed:.3f} s")
    assert ok


def test_criterion_2_example1(report):
    t0 = time.perf_counter()
    k, eps, p = 100, 0.01, 0.99
    ex = build_example1(k, eps, p)
    mdp = ex.nominal.mdp
    nominal_opt = Policy.deterministic(np.full(mdp.n_states, ex.L), 2)
    value = standard_value(mdp, ex.perturbed_kernel, nominal_opt)[ex.S0]
    target = -(1 + eps) * p ** (k - 1)
    robust = rvi_solve(mdp, ex.nominal.spec)
    elapsed = time.perf_counter() - t0
    ok = abs(value - target) <= 1e-9 and robust.pi_star[ex.S0, ex.R] == 1.0 and elapsed < 1.0
    report(2, ok, f"perturbed value {value:.12f} vs {target:.12f}, robust action at S0 "
                  f"{'R' if robust.pi_star[ex.S0, ex.R] == 1.0 else 'L'}, {elapsed:.3f} s")
    assert ok


def test_criterion_3_rpmd_linear(report):
    t0 = time.perf_counter()
    worst_slack, worst_k = math.inf, 0
    rho = np.full(5, 0.2)
    for seed in GARNET_SEEDS:
        b = garnet(seed)
        cfg = SolverConfig(schedule=StepsizeSchedule.geometric(1.0, pessimistic_constants(b.mdp, b.spec, rho).ratio),
                           rho=rho, max_iters=300, check_recursion=True)
        log = rpmd_solve(b.mdp, b.spec, cfg)
        gaps = log.gaps
        hit = np.flatnonzero(gaps <= 1e-6)
        worst_k = max(worst_k, int(hit[0]) if hit.size else 10**9)
        slacks = [r["recursion_slack"] for r in log.records if "recursion_slack" in r]
        worst_slack = min([worst_slack] + slacks)
    elapsed = time.perf_counter() - t0
    ok = worst_k <= 300 and worst_slack >= -1e-7 and elapsed < 30.0
    report(3, ok, f"gap <= 1e-6 reached by k = {worst_k} on every instance, "
                  f"min recursion slack {worst_slack:.2e}, {elapsed:.2f} s")
    assert ok


def _gap_at(log, k):
    """Gap at iteration k; a run that stopped earlier stays at its last policy."""
    for r in log.records:
        if r["k"] == k:
            return float(r["gap"])
    return float(log.records[-1]["gap"])


def test_criterion_4_euclidean_constant(report):
    t0 = time.perf_counter()
    worst_dec, ratio_ok, nontrivial = -math.inf, True, 0
    for seed in GARNET_SEEDS:
        b = garnet(seed)
        cfg = SolverConfig(schedule=StepsizeSchedule.constant(10.0), map=MirrorMap.EUCLIDEAN,
                           max_iters=2000)
        log = rpmd_solve(b.mdp, b.spec, cfg)
        dec = log.column("value_decrease_max")[1:]
        if dec.size:
            worst_dec = max(worst_dec, float(np.max(dec)))
        g200, g2000 = _gap_at(log, 200), _gap_at(log, 2000)
        nontrivial += g200 > 0
        ratio_ok &= g2000 <= g200 / 3.0
    elapsed = time.perf_counter() - t0
    ok = worst_dec <= 1e-8 and ratio_ok and elapsed < 60.0
    report(4, ok, f"max per-state value change {worst_dec:.2e}, gap(2000) <= gap(200)/3 on all "
                  f"{len(GARNET_SEEDS)} ({nontrivial} with gap(200) > 0), {elapsed:.2f} s")
    assert ok


def test_criterion_5_srpmd_noise_floor(report):
    t0 = time.perf_counter()
    b = build_graded_gap()
    n = b.mdp.n_states
    rho = np.full(n, 1.0 / n)
    gamma = b.mdp.gamma
    ref = reference_optimum(b.mdp, b.spec, rho)
    M_hat = pessimistic_constants(b.mdp, b.spec, rho, ref.pi_star).M
    sched = StepsizeSchedule.geometric(1.0, pessimistic_constants(b.mdp, b.spec, rho).ratio)
    plateaus, bound_ok = {}, True
    for e in (0.1, 0.05, 0.025):
        bound = 4 * M_hat * e / (1 - gamma) ** 2
        runs = []
        for seed in range(10):
            cfg = SolverConfig(schedule=sched, rho=rho, max_iters=300, noise=e, seed=seed)
            gaps = srpmd_solve(b.mdp, b.spec, cfg, reference=ref).gaps
            runs.append(float(np.mean(gaps[-20:])))
        bound_ok &= max(runs) <= bound
        plateaus[e] = float(np.mean(runs))
    r1 = plateaus[0.1] / plateaus[0.05]
    r2 = plateaus[0.05] / plateaus[0.025]
    elapsed = time.perf_counter() - t0
    ok = bound_ok and 1.5 <= r1 <= 3 and 1.5 <= r2 <= 3 and elapsed < 120.0
    report(5, ok, "plateaus " + ", ".join(f"e={e}: {v:.4f}" for e, v in plateaus.items())
                  + f" (bound at e=0.1: {4 * M_hat * 0.1 / (1 - gamma) ** 2:.1f}), "
                  f"halving ratios {r1:.2f} and {r2:.2f}, {elapsed:.2f} s")
    assert ok


def _contamination_instance(rng):
    from robustmdp import AmbiguitySpec, Contamination, TabularMDP

    nom = rng.dirichlet(np.ones(3), size=(3, 2))
    eps = rng.uniform(0, 0.5, size=(3, 2))
    pairs = [[Contamination(float(eps[s, a])) for a in range(2)] for s in range(3)]
    return TabularMDP(rng.random((3, 2)), float(rng.uniform(0.5, 0.95)), nom), AmbiguitySpec(nom, pairs)


def test_criterion_6_rtd(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    oracle_err = 0.0
    for _ in range(50):
        mdp, spec = _contamination_instance(rng)
        pi = rng.dirichlet(np.ones(2), size=3)
        x = rng.normal(size=(3, 2)) * 3
        F = fixed_point_operator(mdp, spec, pi, x)
        for mode in ("known_u", "contamination"):
            oracle_err = max(oracle_err, float(np.max(np.abs(expected_operator(mode, mdp, spec, pi, x) - F))))
    b = rtd_instance()
    assert b.params["rtd_safe"]
    contraction = operator_contraction_check(b.mdp, b.spec, RTD_POLICY, n_pairs=100)
    medians = {}
    for mode in ("known_u", "contamination"):
        errs = [rtd_evaluate(b.mdp, b.spec, RTD_POLICY,
                             RTDConfig(alpha=0.01, steps=200_000, seed=s, operator_mode=mode,
                                       trace_every=0)).final_error()
                for s in range(10)]
        medians[mode] = float(np.median(errs))
    elapsed = time.perf_counter() - t0
    ok = (oracle_err <= 1e-10 and contraction.holds and max(medians.values()) <= 0.05
          and elapsed < 120.0)
    report(6, ok, f"oracle error {oracle_err:.1e}, contraction ratio {contraction.max_ratio:.4f} "
                  f"<= {contraction.factor_bound:.4f}, median error at T=2e5 "
                  + ", ".join(f"{m} {v:.4f}" for m, v in medians.items()) + f", {elapsed:.2f} s")
    assert ok


def test_criterion_7_lemma_sweeps(report):
    t0 = time.perf_counter()
    slacks = {
        "perf-diff": perf_diff_sweep(500),
        "q-signal": q_signal_sweep(500),
        "three-point": three_point_sweep(500),
        "monotone step": monotone_step_sweep(500),
    }
    fd = gradient_fd_sweep(50)
    elapsed = time.perf_counter() - t0
    ok = min(slacks.values()) >= -1e-8 and fd <= 1e-3 and elapsed < 120.0
    report(7, ok, ", ".join(f"{k} min slack {v:.1e}" for k, v in slacks.items())
                  + f", gradient FD rel. error {fd:.1e}, {elapsed:.2f} s")
    assert ok


def test_criterion_8_rtd_scaling(report):
    t0 = time.perf_counter()
    b = rtd_instance()
    med = {}
    for T in (10_000, 40_000):
        errs = [rtd_evaluate(b.mdp, b.spec, RTD_POLICY,
                             RTDConfig(alpha=0.01, steps=T, seed=s, trace_every=0)).final_error()
                for s in range(10)]
        med[T] = float(np.median(errs))
    factor = med[10_000] / med[40_000]
    elapsed = time.perf_counter() - t0
    ok = factor >= 1.6
    report(8, ok, f"median error {med[10_000]:.4f} at T=1e4, {med[40_000]:.4f} at T=4e4, "
                  f"factor {factor:.2f} (alpha=0.01), {elapsed:.2f} s")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
