import warnings

import numpy as np
import pytest
from conftest import one_state_mdp, random_mdp, random_policy, singleton_spec

from robustmdp import AmbiguitySpec, Contamination, L1Ball, build_counterexample
from robustmdp.mdp import occupancy, standard_q, standard_value
from robustmdp.robust_eval import (
    BoundaryPolicyWarning,
    evaluate_robust,
    f_rho,
    iteration_cap,
    perf_diff_check,
    policy_gradient,
    q_signal_check,
    robust_bellman_apply,
)
from robustmdp.solvers import rvi_solve
from robustmdp.verify import random_bundle


class TestBellmanOperator:
    def test_singleton_is_standard_operator(self, rng):
        mdp = random_mdp(rng)
        pi = random_policy(rng, 4, 3)
        v = rng.normal(size=4)
        expected = np.sum(pi * (mdp.cost + mdp.gamma * mdp.nominal @ v), axis=1)
        assert np.allclose(robust_bellman_apply(mdp, singleton_spec(mdp), pi, v), expected, atol=1e-14)

    def test_zero_value_gives_policy_cost(self, rng):
        b = random_bundle(rng)
        pi = random_policy(rng, b.mdp.n_states, b.mdp.n_actions)
        out = robust_bellman_apply(b.mdp, b.spec, pi, np.zeros(b.mdp.n_states))
        assert np.allclose(out, np.sum(pi * b.mdp.cost, axis=1), atol=1e-15)

    def test_contraction_on_random_pairs(self, rng):
        b = random_bundle(rng, n_states=3)
        pi = random_policy(rng, 3, b.mdp.n_actions)
        for _ in range(100):
            v, w = rng.normal(size=(2, 3)) * 5
            lhs = np.max(np.abs(robust_bellman_apply(b.mdp, b.spec, pi, v)
                                - robust_bellman_apply(b.mdp, b.spec, pi, w)))
            assert lhs <= b.mdp.gamma * np.max(np.abs(v - w)) + 1e-12


class TestEvaluateRobust:
    def test_singleton_matches_standard_value(self, rng):
        mdp = random_mdp(rng)
        pi = random_policy(rng, 4, 3)
        ev = evaluate_robust(mdp, singleton_spec(mdp), pi, tol=1e-11)
        assert np.allclose(ev.v_r, standard_value(mdp, mdp.nominal, pi), atol=1e-11)

    def test_counterexample_closed_forms(self):
        C, g = 2.0, 0.5
        ce = build_counterexample(C, g)
        ev = evaluate_robust(ce.bundle.mdp, ce.bundle.spec, ce.pi, tol=1e-12)
        g2 = g * g
        assert ev.v_r[ce.SC] == pytest.approx(4 / 3, abs=1e-12)
        assert ev.v_r[ce.SC] == pytest.approx(g * C / (1 - g2), abs=1e-12)
        assert ev.v_r[ce.SB] == pytest.approx(1 + g2 * C / (1 - g2), abs=1e-12)
        assert ev.v_r[ce.SA] == pytest.approx(C / (1 - g2), abs=1e-12)
        assert np.array_equal(ev.worst_kernel[ce.SC, ce.L], [1.0, 0.0, 0.0])

    @pytest.mark.parametrize("seed", range(10))
    def test_invariants(self, seed):
        rng = np.random.default_rng(seed)
        b = random_bundle(rng)
        mdp, spec = b.mdp, b.spec
        pi = random_policy(rng, mdp.n_states, mdp.n_actions)
        tol = 1e-10
        ev = evaluate_robust(mdp, spec, pi, tol=tol)
        assert np.allclose(np.sum(ev.q_r * pi, axis=1), ev.v_r, atol=1e-9)
        sup = spec.support_all(ev.v_r, want_pstar=False)[0]
        assert np.allclose(ev.q_r, mdp.cost + mdp.gamma * sup, atol=1e-9)
        assert np.allclose(standard_value(mdp, ev.worst_kernel, pi), ev.v_r, atol=10 * tol)
        assert np.allclose(standard_q(mdp, ev.worst_kernel, pi), ev.q_r, atol=10 * tol)
        resid = np.max(np.abs(robust_bellman_apply(mdp, spec, pi, ev.v_r) - ev.v_r))
        assert resid <= tol
        for s in range(mdp.n_states):
            for a in range(mdp.n_actions):
                assert spec.is_member(s, a, ev.worst_kernel[s, a])

    def test_warm_start_changes_only_iterations(self, rng):
        b = random_bundle(rng)
        pi = random_policy(rng, b.mdp.n_states, b.mdp.n_actions)
        cold = evaluate_robust(b.mdp, b.spec, pi, tol=1e-11)
        warm = evaluate_robust(b.mdp, b.spec, pi, tol=1e-11, v0=cold.v_r)
        assert warm.iterations <= cold.iterations
        assert np.allclose(warm.v_r, cold.v_r, atol=2e-11)

    def test_l1_nesting_is_monotone(self, rng):
        mdp = random_mdp(rng)
        pi = random_policy(rng, 4, 3)
        prev = None
        for radius in (0.0, 0.1, 0.3, 0.8, 2.0):
            v = evaluate_robust(mdp, AmbiguitySpec.uniform(mdp.nominal, L1Ball(radius)), pi).v_r
            if prev is not None:
                assert np.all(v >= prev - 1e-9)
            prev = v

    def test_iteration_cap(self):
        for gamma, tol, first in ((0.5, 1e-10, 1.0), (0.9, 1e-12, 40.0), (0.99, 1e-8, 0.3)):
            cap = iteration_cap(gamma, tol, first)
            # after cap - 10 steps the step size max(1, first) * gamma^n is below the stop threshold
            assert max(1.0, first) * gamma ** (cap - 10) <= tol * (1 - gamma) / gamma
            assert max(1.0, first) * gamma ** (cap - 12) > tol * (1 - gamma) / gamma

    def test_to_dict_fields(self, rng):
        b = random_bundle(rng)
        ev = evaluate_robust(b.mdp, b.spec, random_policy(rng, b.mdp.n_states, b.mdp.n_actions))
        assert {"v_r", "q_r", "worst_kernel", "residual", "iterations"} <= set(ev.to_dict())


class TestObjectiveAndGradient:
    def test_f_rho_examples(self):
        assert f_rho(one_state_mdp(1.0, 0.5), singleton_spec(one_state_mdp()), [[1.0]], [1.0]) \
            == pytest.approx(2.0)
        ce = build_counterexample(2.0, 0.5)
        g2 = 0.25
        expected = (2 / (1 - g2) + 1 + g2 * 2 / (1 - g2) + 0.5 * 2 / (1 - g2)) / 3
        assert f_rho(ce.bundle.mdp, ce.bundle.spec, ce.pi, np.full(3, 1 / 3), tol=1e-12) \
            == pytest.approx(expected, abs=1e-12)
        ev = evaluate_robust(ce.bundle.mdp, ce.bundle.spec, ce.pi)
        assert f_rho(ce.bundle.mdp, ce.bundle.spec, ce.pi, [0, 1, 0]) == pytest.approx(ev.v_r[1])

    def test_singleton_gradient_is_standard(self, rng):
        mdp = random_mdp(rng)
        pi = random_policy(rng, 4, 3)
        rho = rng.dirichlet(np.ones(4))
        d = occupancy(mdp, mdp.nominal, pi, rho)
        expected = d[:, None] * standard_q(mdp, mdp.nominal, pi) / (1 - mdp.gamma)
        assert np.allclose(policy_gradient(mdp, singleton_spec(mdp), pi, rho), expected, atol=1e-9)

    def test_zero_cost_gives_zero_gradient(self, rng):
        mdp = random_mdp(rng)
        mdp = type(mdp)(np.zeros_like(mdp.cost), mdp.gamma, mdp.nominal)
        spec = AmbiguitySpec.uniform(mdp.nominal, Contamination(0.3))
        g = policy_gradient(mdp, spec, random_policy(rng, 4, 3), np.full(4, 0.25))
        assert np.all(g == 0.0)

    def test_boundary_policy_warns(self, rng):
        mdp = random_mdp(rng)
        pi = np.tile([1.0, 0.0, 0.0], (4, 1))
        with pytest.warns(BoundaryPolicyWarning):
            policy_gradient(mdp, singleton_spec(mdp), pi, np.full(4, 0.25))

    @pytest.mark.parametrize("seed", range(50))
    def test_central_differences(self, seed):
        rng = np.random.default_rng(1000 + seed)
        mdp = random_mdp(rng, n_states=3, n_actions=3)
        spec = AmbiguitySpec.uniform(mdp.nominal, Contamination(0.25))
        pi = 0.2 / 3 + 0.8 * random_policy(rng, 3, 3)
        rho = rng.dirichlet(np.ones(3))
        ev = evaluate_robust(mdp, spec, pi, tol=1e-14)
        if ev.had_ties:
            pytest.skip("worst case is not unique at this policy")
        grad = policy_gradient(mdp, spec, pi, rho, evaluation=ev)
        delta = rng.normal(size=(3, 3))
        delta -= delta.mean(axis=1, keepdims=True)
        t = 1e-6
        fd = (f_rho(mdp, spec, pi + t * delta, rho, tol=1e-14)
              - f_rho(mdp, spec, pi - t * delta, rho, tol=1e-14)) / (2 * t)
        exact = float(np.sum(grad * delta))
        assert abs(fd - exact) <= 1e-3 * max(abs(exact), 1e-8)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            fwd = (f_rho(mdp, spec, pi + t * delta, rho, tol=1e-14) - ev.v_r @ rho) / t
        assert abs(fwd - exact) <= 1e-4 * max(1.0, abs(exact))


class TestDiagnosticInequalities:
    def test_identical_policies(self, rng):
        b = random_bundle(rng)
        pi = random_policy(rng, b.mdp.n_states, b.mdp.n_actions)
        pd = perf_diff_check(b.mdp, b.spec, pi, pi, 0)
        qs = q_signal_check(b.mdp, b.spec, pi, pi, 0)
        for r in (pd, qs):
            assert r.lhs == pytest.approx(0.0, abs=1e-12) and r.rhs == pytest.approx(0.0, abs=1e-12)

    def test_counterexample_zero_signal(self):
        ce = build_counterexample(2.0, 0.5)
        mdp, spec = ce.bundle.mdp, ce.bundle.spec
        pd = perf_diff_check(mdp, spec, ce.pi, ce.pi_star, ce.SC)
        assert pd.lhs < 0 and abs(pd.rhs) <= 1e-10 and pd.holds
        qs = q_signal_check(mdp, spec, ce.pi, ce.pi_star, ce.SC)
        assert qs.holds and qs.slack > 1e-3

    def test_random_sweeps(self):
        rng = np.random.default_rng(77)
        for _ in range(200):
            b = random_bundle(rng)
            mdp, spec = b.mdp, b.spec
            pi = random_policy(rng, mdp.n_states, mdp.n_actions)
            other = random_policy(rng, mdp.n_states, mdp.n_actions)
            s = int(rng.integers(mdp.n_states))
            assert perf_diff_check(mdp, spec, pi, other, s).holds
        for _ in range(200):
            b = random_bundle(rng)
            mdp, spec = b.mdp, b.spec
            pi = random_policy(rng, mdp.n_states, mdp.n_actions)
            pi_star = rvi_solve(mdp, spec).pi_star
            s = int(rng.integers(mdp.n_states))
            assert q_signal_check(mdp, spec, pi, pi_star, s).holds
