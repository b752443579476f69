"""Robust temporal-difference evaluation from a single nominal trajectory."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import _kernels as K
from .ambiguity import AmbiguitySpec
from .errors import AssumptionViolated, ModeMismatch, ValidationError
from .mdp import TabularMDP, as_probs, assumption_check, stationary_state_action_dist
from .robust_eval import evaluate_robust

KNOWN_U = "known_u"
CONTAMINATION = "contamination"
_MODES = {KNOWN_U: 0, CONTAMINATION: 1}


@dataclass(frozen=True)
class RTDConfig:
    """Constant-stepsize robust TD settings; theta starts at zero."""

    alpha: float = 0.01
    steps: int = 100_000
    seed: int = 0
    start_state: int = 0
    operator_mode: str = KNOWN_U
    trace_every: int = 1000
    burn_in: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValidationError("alpha must lie in (0, 1]")
        if self.steps < 0:
            raise ValidationError("steps must be nonnegative")
        if self.operator_mode not in _MODES:
            raise ValidationError(f"unknown operator mode {self.operator_mode!r}")

    def with_seed(self, seed: int) -> "RTDConfig":
        return replace(self, seed=int(seed))


@dataclass(frozen=True)
class Quadruple:
    s: int
    a: int
    s_next: int
    a_next: int


def _cdf(p: np.ndarray) -> np.ndarray:
    c = np.cumsum(p, axis=-1)
    c /= c[..., -1:]
    c[..., -1] = 1.0
    return c


def sample_trajectory(mdp: TabularMDP, policy, steps: int, seed: int, start_state: int = 0) -> np.ndarray:
    """Markov chain of quadruples (s, a, s', a') from the nominal kernel, shape (steps, 4).

    All randomness is drawn up front from ``numpy.random.default_rng(seed)``
    and mapped through inverse CDFs, so the JIT and pure-numpy paths agree.
    """
    probs = as_probs(policy)
    rng = np.random.default_rng(seed)
    u_a0 = rng.random()
    u_next = rng.random(steps)
    u_act = rng.random(steps)
    out = np.empty((steps, 4), dtype=np.int64)
    K.sample_chain(_cdf(mdp.nominal), _cdf(probs), int(start_state), u_a0, u_next, u_act, out)
    return out


def as_quadruples(traj: np.ndarray) -> list:
    return [Quadruple(*map(int, row)) for row in traj]


def _mode_code(mode: str, spec: AmbiguitySpec) -> int:
    if mode not in _MODES:
        raise ValidationError(f"unknown operator mode {mode!r}")
    if mode == CONTAMINATION and not spec.is_contamination:
        raise ModeMismatch("contamination operator needs a contamination ambiguity set")
    return _MODES[mode]


def state_values(probs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """M(pi, x)(s) = sum_a pi(a|s) x(s, a)."""
    return np.sum(probs * x, axis=1)


def stochastic_operator(mode: str, mdp: TabularMDP, spec: AmbiguitySpec, policy,
                        x: np.ndarray, zeta) -> np.ndarray:
    """f(x; zeta): x with only the (s, a) entry moved to its sampled robust TD target."""
    _mode_code(mode, spec)
    probs = as_probs(policy)
    x = np.asarray(x, dtype=np.float64)
    s, a, s2, a2 = (zeta.s, zeta.a, zeta.s_next, zeta.a_next) if isinstance(zeta, Quadruple) else zeta
    m = state_values(probs, x)
    g = mdp.gamma
    if mode == KNOWN_U:
        sigma = spec.support_argmax(s, a, m).value - float(spec.nominal[s, a] @ m)
        target = mdp.cost[s, a] + g * x[s2, a2] + g * sigma
    else:
        eps = spec.epsilon_table()[s, a]
        sigma_q = spec.q_support_all(m)[s, a]
        target = mdp.cost[s, a] + g * (1.0 - eps) * x[s2, a2] + g * eps * sigma_q
    out = x.copy()
    out[s, a] = target
    return out


def robust_q_operator(mdp: TabularMDP, spec: AmbiguitySpec, policy, x: np.ndarray) -> np.ndarray:
    """T^pi(x)(s,a) = c(s,a) + gamma max_{p in P_sa} p.M(pi, x)."""
    values, _ = spec.support_all(state_values(as_probs(policy), x), want_pstar=False)
    return mdp.cost + mdp.gamma * values


def fixed_point_operator(mdp, spec, policy, x, nu: Optional[np.ndarray] = None) -> np.ndarray:
    """F(x) = diag(nu)(T^pi(x) - x) + x."""
    x = np.asarray(x, dtype=np.float64)
    if nu is None:
        nu = stationary_state_action_dist(mdp, policy).nu
    return nu * (robust_q_operator(mdp, spec, policy, x) - x) + x


def expected_operator(mode: str, mdp, spec, policy, x, nu: Optional[np.ndarray] = None) -> np.ndarray:
    """E_{zeta ~ nu} f(x; zeta) by enumerating every quadruple with its probability."""
    probs = as_probs(policy)
    if nu is None:
        nu = stationary_state_action_dist(mdp, probs).nu
    x = np.asarray(x, dtype=np.float64)
    total = np.zeros_like(x)
    n_s, n_a = x.shape
    for s in range(n_s):
        for a in range(n_a):
            if nu[s, a] == 0.0:
                continue
            for s2 in range(n_s):
                ps = mdp.nominal[s, a, s2]
                if ps == 0.0:
                    continue
                for a2 in range(n_a):
                    w = nu[s, a] * ps * probs[s2, a2]
                    if w == 0.0:
                        continue
                    total += w * stochastic_operator(mode, mdp, spec, probs, x, (s, a, s2, a2))
    return total


@dataclass
class ContractionReport:
    factor_bound: float
    max_ratio: float
    holds: bool


def operator_contraction_check(mdp, spec, policy, n_pairs: int = 100, seed: int = 0,
                               scale: float = 10.0) -> ContractionReport:
    """Check ||F(x) - F(y)|| <= (1 - nu_min (1 - gamma)) ||x - y|| on random pairs."""
    st = stationary_state_action_dist(mdp, policy)
    bound = 1.0 - st.nu_min * (1.0 - mdp.gamma)
    rng = np.random.default_rng(seed)
    worst = 0.0
    holds = True
    shape = (mdp.n_states, mdp.n_actions)
    for _ in range(n_pairs):
        x = rng.uniform(-scale, scale, shape)
        y = rng.uniform(-scale, scale, shape)
        num = np.max(np.abs(fixed_point_operator(mdp, spec, policy, x, st.nu)
                            - fixed_point_operator(mdp, spec, policy, y, st.nu)))
        den = np.max(np.abs(x - y))
        worst = max(worst, num / den)
        holds &= bool(num <= bound * den + 1e-10)
    return ContractionReport(factor_bound=bound, max_ratio=worst, holds=holds)


@dataclass
class RTDResult:
    theta: np.ndarray
    trace_steps: np.ndarray
    trace: np.ndarray
    reference_q: Optional[np.ndarray] = None

    def final_error(self) -> float:
        return float(np.max(np.abs(self.theta - self.reference_q)))


def rtd_evaluate(mdp: TabularMDP, spec: AmbiguitySpec, policy, config: RTDConfig,
                 reference_q: Optional[np.ndarray] = None, check: bool = True,
                 max_exact_states: int = 500) -> RTDResult:
    """Run robust TD for ``config.steps`` updates along one nominal trajectory.

    When the instance is small enough for exact evaluation (or ``reference_q`` is
    given), the sup-norm error to the robust Q-table is recorded every
    ``config.trace_every`` steps.
    """
    probs = np.ascontiguousarray(as_probs(policy))
    mode = _mode_code(config.operator_mode, spec)
    if check:
        report = assumption_check(mdp, probs)
        if not report.ok:
            raise AssumptionViolated(f"robust TD requires a positive, irreducible, aperiodic chain: {report}")
    if reference_q is None and mdp.n_states <= max_exact_states:
        reference_q = evaluate_robust(mdp, spec, probs, tol=1e-12).q_r
    theta = np.zeros((mdp.n_states, mdp.n_actions))
    traj = sample_trajectory(mdp, probs, config.steps + config.burn_in, config.seed, config.start_state)
    traj = traj[config.burn_in:]
    every = config.trace_every if reference_q is not None else 0
    n_trace = config.steps // every if every > 0 else 0
    trace = np.empty(n_trace)
    ref = reference_q if reference_q is not None else np.zeros_like(theta)
    kind, param, rows, nrows, nominal = spec.arrays
    n = K.rtd_loop(traj, np.ascontiguousarray(mdp.cost), probs, mdp.gamma, config.alpha, mode,
                   kind, param, rows, nrows, nominal, theta, np.ascontiguousarray(ref), every, trace)
    steps = np.arange(1, n + 1) * every if every > 0 else np.zeros(0, dtype=np.int64)
    return RTDResult(theta=theta, trace_steps=steps, trace=trace[:n], reference_q=reference_q)
