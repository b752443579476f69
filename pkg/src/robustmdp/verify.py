"""Numerical checks of the structural inequalities and the hand-built examples.

Every check returns :class:`CheckRow` records; the command line prints them as a
pass/fail table.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ambiguity import AmbiguitySpec, Contamination, L1Ball, Scenarios, Singleton
from .instances import InstanceBundle, build_counterexample, build_example1, build_garnet
from .mdp import StateDist, TabularMDP, as_probs, occupancy_matrix, standard_value, stationary_state_action_dist
from .mirror import MirrorMap, bregman, mirror_step, three_point_check
from .robust_eval import evaluate_robust, f_rho, perf_diff_check, policy_gradient, q_signal_check
from .rtd import operator_contraction_check
from .solvers import rvi_solve

SLACK_TOL = 1e-8


@dataclass
class CheckRow:
    name: str
    passed: bool
    detail: str


# ---------------------------------------------------------------------------
# hand-built examples


def counterexample_checks(C: float = 2.0, gamma: float = 0.5):
    """The three assertions about the three-state instance."""
    ce = build_counterexample(C, gamma)
    mdp, spec = ce.bundle.mdp, ce.bundle.spec
    ev_pi = evaluate_robust(mdp, spec, ce.pi, tol=1e-13)
    ev_star = evaluate_robust(mdp, spec, ce.pi_star, tol=1e-13)
    g2 = gamma * gamma
    expected = np.array([C / (1 - g2), 1 + g2 * C / (1 - g2), gamma * C / (1 - g2)])
    err = float(np.max(np.abs(ev_pi.v_r - expected)))
    rows = [CheckRow("counterexample: robust value of pi matches closed form", err <= 1e-9,
                     f"max error {err:.3e}")]

    pd = perf_diff_check(mdp, spec, ce.pi, ce.pi_star, ce.SC, ev_pi=ev_pi, ev_prime=ev_star)
    ok = abs(pd.rhs) <= 1e-10 and pd.lhs < -1e-3
    rows.append(CheckRow("counterexample: performance-difference bound carries zero signal at S_c", ok,
                         f"lhs {pd.lhs:.6g}, rhs {pd.rhs:.3e}"))

    signal, gap = vi_signal(mdp, spec, ce.pi, ce.pi_star, ev_pi, ev_star)
    rows.append(CheckRow("counterexample: aggregated signal is zero while the gap is positive",
                         abs(signal) <= 1e-10 and gap > 1e-3,
                         f"signal {signal:.3e}, (1-gamma)*gap {gap:.6g}"))
    return rows


def vi_signal(mdp, spec, pi, pi_star, ev_pi=None, ev_star=None):
    """Signal E_{s~nu*} E_{d_s^{pi*,u_pi*}} <Q^pi_r, pi* - pi> and (1-gamma)(f_nu*(pi) - f_nu*(pi*)).

    nu* is the stationary state distribution of pi* under its own worst kernel.
    """
    p, ps = as_probs(pi), as_probs(pi_star)
    ev_pi = ev_pi or evaluate_robust(mdp, spec, p, tol=1e-13)
    ev_star = ev_star or evaluate_robust(mdp, spec, ps, tol=1e-13)
    nu_star = stationary_state_action_dist(mdp, ps, kernel=ev_star.worst_kernel).state_dist
    d = occupancy_matrix(mdp, ev_star.worst_kernel, ps)
    inner = np.sum(ev_pi.q_r * (ps - p), axis=1)
    signal = float(nu_star @ (d @ inner))
    gap = float((1 - mdp.gamma) * nu_star @ (ev_pi.v_r - ev_star.v_r))
    return signal, gap


def example1_checks(k: int = 100, eps: float = 0.01, p: float = 0.99, gamma: float = 0.99):
    ex = build_example1(k, eps, p, gamma)
    mdp, spec = ex.nominal.mdp, ex.nominal.spec
    nominal_spec = AmbiguitySpec.uniform(mdp.nominal, Singleton())
    nominal_opt = rvi_solve(mdp, nominal_spec).pi_star
    v_pert = standard_value(mdp, ex.perturbed_kernel, nominal_opt)[ex.S0]
    target = -(1 + eps) * p ** (k - 1)
    robust = rvi_solve(mdp, spec).pi_star
    return [
        CheckRow("example1: nominal optimum goes left", bool(nominal_opt[ex.S0, ex.L] == 1.0),
                 f"pi(L|S0) = {nominal_opt[ex.S0, ex.L]}"),
        CheckRow("example1: perturbed value of the nominal optimum", abs(v_pert - target) <= 1e-9,
                 f"value {v_pert:.12f}, expected {target:.12f}"),
        CheckRow("example1: robust optimum goes right", bool(robust[ex.S0, ex.R] == 1.0),
                 f"pi(R|S0) = {robust[ex.S0, ex.R]}"),
    ]


# ---------------------------------------------------------------------------
# random instances for property sweeps


def random_bundle(rng: np.random.Generator, n_states=None, n_actions=None, gamma=None) -> InstanceBundle:
    """Small random instance with a randomly mixed per-pair ambiguity table."""
    n_s = int(n_states or rng.integers(2, 6))
    n_a = int(n_actions or rng.integers(2, 4))
    g = float(gamma if gamma is not None else rng.uniform(0.5, 0.95))
    nom = rng.dirichlet(np.ones(n_s), size=(n_s, n_a))
    cost = 1.0 - rng.random((n_s, n_a))
    pairs = []
    for s in range(n_s):
        row = []
        for a in range(n_a):
            kind = rng.integers(5)
            if kind == 0:
                row.append(Singleton())
            elif kind == 1:
                extra = rng.dirichlet(np.ones(n_s), size=int(rng.integers(1, 4)))
                row.append(Scenarios(np.vstack([nom[s, a], extra])))
            elif kind == 2:
                row.append(Contamination(float(rng.uniform(0, 0.5))))
            elif kind == 3:
                q = np.vstack([nom[s, a], rng.dirichlet(np.ones(n_s), size=int(rng.integers(1, 4)))])
                row.append(Contamination(float(rng.uniform(0, 0.5)), q))
            else:
                row.append(L1Ball(float(rng.uniform(0, 0.6))))
        pairs.append(row)
    mdp = TabularMDP(cost, g, nom)
    return InstanceBundle(mdp=mdp, spec=AmbiguitySpec(nom, pairs), name="random")


def random_policy(rng, n_s, n_a, deterministic_prob: float = 0.2) -> np.ndarray:
    pi = rng.dirichlet(np.ones(n_a), size=n_s)
    if rng.random() < deterministic_prob:
        pi = np.zeros((n_s, n_a))
        pi[np.arange(n_s), rng.integers(n_a, size=n_s)] = 1.0
    return pi


def perf_diff_sweep(n_trials: int = 500, seed: int = 0) -> float:
    """Minimum slack of the performance-difference inequality over random trials."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(n_trials):
        b = random_bundle(rng)
        n_s, n_a = b.mdp.n_states, b.mdp.n_actions
        pi, pp = random_policy(rng, n_s, n_a), random_policy(rng, n_s, n_a)
        s = int(rng.integers(n_s))
        worst = min(worst, perf_diff_check(b.mdp, b.spec, pi, pp, s, tol=1e-12).slack)
    return float(worst)


def q_signal_sweep(n_trials: int = 500, seed: int = 1) -> float:
    """Minimum slack of the q-signal inequality with pi* from robust value iteration."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(n_trials):
        b = random_bundle(rng)
        n_s, n_a = b.mdp.n_states, b.mdp.n_actions
        pi_star = rvi_solve(b.mdp, b.spec).pi_star
        pi = random_policy(rng, n_s, n_a)
        s = int(rng.integers(n_s))
        worst = min(worst, q_signal_check(b.mdp, b.spec, pi, pi_star, s, tol=1e-12).slack)
    return float(worst)


def _random_step_inputs(rng):
    map_ = MirrorMap.KL if rng.random() < 0.5 else MirrorMap.EUCLIDEAN
    n_a = int(rng.integers(2, 6))
    pi = rng.dirichlet(np.ones(n_a))
    q = rng.uniform(0, 1, n_a)
    eta = float(10 ** rng.uniform(-2, 2))
    return map_, pi, q, eta


def three_point_sweep(n_trials: int = 500, seed: int = 2) -> float:
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(n_trials):
        map_, pi, q, eta = _random_step_inputs(rng)
        p = random_policy(rng, 1, pi.size, deterministic_prob=0.1)[0]
        if map_ is MirrorMap.KL and np.any(p == 0) and rng.random() < 0.5:
            p = rng.dirichlet(np.ones(pi.size))
        worst = min(worst, three_point_check(map_, pi, q, eta, p).slack)
    return float(worst)


def monotone_step_sweep(n_trials: int = 500, seed: int = 3) -> float:
    """Minimum of -D(pi,pi+) - D(pi+,pi) - eta <q, pi+ - pi> (nonnegative when the step is monotone)."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(n_trials):
        map_, pi, q, eta = _random_step_inputs(rng)
        plus = mirror_step(map_, pi, q, eta)
        lhs = eta * float(q @ (plus - pi))
        rhs = -bregman(map_, pi, plus) - bregman(map_, plus, pi)
        worst = min(worst, rhs - lhs, -lhs)
    return float(worst)


def gradient_fd_sweep(n_trials: int = 50, seed: int = 4, t: float = 1e-6) -> float:
    """Largest relative error between the gradient formula and central differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < n_trials:
        b = random_bundle(rng, n_states=int(rng.integers(2, 5)))
        mdp, spec = b.mdp, b.spec
        n_s, n_a = mdp.n_states, mdp.n_actions
        pi = rng.dirichlet(np.ones(n_a) * 2.0, size=n_s)
        pi = 0.8 * pi + 0.2 / n_a
        rho = StateDist(rng.dirichlet(np.ones(n_s)))
        ev = evaluate_robust(mdp, spec, pi, tol=1e-14)
        if ev.had_ties:
            continue
        grad = policy_gradient(mdp, spec, pi, rho.weights, evaluation=ev)
        delta = rng.normal(size=(n_s, n_a))
        delta -= delta.mean(axis=1, keepdims=True)
        fp = f_rho(mdp, spec, pi + t * delta, rho, tol=1e-14)
        fm = f_rho(mdp, spec, pi - t * delta, rho, tol=1e-14)
        fd = (fp - fm) / (2 * t)
        exact = float(np.sum(grad * delta))
        worst = max(worst, abs(fd - exact) / max(abs(exact), 1e-12))
        done += 1
    return float(worst)


def contraction_sweep(n_instances: int = 20, n_pairs: int = 100, seed: int = 5) -> bool:
    rng = np.random.default_rng(seed)
    ok = True
    for i in range(n_instances):
        b = build_garnet(3, 2, 3, gamma=float(rng.uniform(0.5, 0.95)), ambiguity_kind="contamination",
                         ambiguity_param=0.2, seed=int(rng.integers(1 << 31)))
        pi = rng.dirichlet(np.ones(2), size=3)
        ok &= operator_contraction_check(b.mdp, b.spec, pi, n_pairs=n_pairs, seed=i).holds
    return bool(ok)


# ---------------------------------------------------------------------------
# suite driver

SUITES = ("counterexample", "example1", "perf_diff", "q_signal", "three_point",
          "monotone", "contraction", "gradient", "all")


def run_suite(name: str, C: float = 2.0, gamma: float = 0.5, trials: int = 200, seed: int = 0):
    rows = []
    if name in ("counterexample", "all"):
        rows += counterexample_checks(C, gamma)
    if name in ("example1", "all"):
        rows += example1_checks()
    if name in ("perf_diff", "all"):
        s = perf_diff_sweep(trials, seed)
        rows.append(CheckRow(f"performance-difference inequality ({trials} trials)", s >= -SLACK_TOL,
                             f"min slack {s:.3e}"))
    if name in ("q_signal", "all"):
        s = q_signal_sweep(trials, seed + 1)
        rows.append(CheckRow(f"q-signal inequality ({trials} trials)", s >= -SLACK_TOL, f"min slack {s:.3e}"))
    if name in ("three_point", "all"):
        s = three_point_sweep(trials, seed + 2)
        rows.append(CheckRow(f"three-point inequality ({trials} trials)", s >= -SLACK_TOL, f"min slack {s:.3e}"))
    if name in ("monotone", "all"):
        s = monotone_step_sweep(trials, seed + 3)
        rows.append(CheckRow(f"monotone mirror step ({trials} trials)", s >= -SLACK_TOL, f"min slack {s:.3e}"))
    if name in ("contraction", "all"):
        ok = contraction_sweep(seed=seed + 5)
        rows.append(CheckRow("fixed-point operator contraction bound", ok, "20 instances x 100 pairs"))
    if name in ("gradient", "all"):
        n = max(10, trials // 4)
        e = gradient_fd_sweep(n, seed + 4)
        rows.append(CheckRow(f"gradient vs central differences ({n} trials)", e <= 1e-3,
                             f"max relative error {e:.3e}"))
    return rows


def format_table(rows) -> str:
    width = max(len(r.name) for r in rows) if rows else 10
    lines = [f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}" for r in rows]
    return "\n".join(lines)
