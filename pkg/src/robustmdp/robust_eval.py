"""Exact robust policy evaluation and the first-order diagnostics built on it."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .ambiguity import AmbiguitySpec
from .errors import NonConvergence, ValidationError
from .mdp import TabularMDP, as_probs, as_weights, occupancy, occupancy_matrix

DEFAULT_TOL = 1e-10


class BoundaryPolicyWarning(UserWarning):
    """The gradient formula was evaluated at a policy with zero entries."""


@dataclass
class RobustEvaluation:
    """Robust value, robust Q-table and the extracted worst-case kernel."""

    v_r: np.ndarray
    q_r: np.ndarray
    worst_kernel: np.ndarray
    residual: float
    iterations: int
    ties: Optional[np.ndarray] = None

    @property
    def had_ties(self) -> bool:
        return bool(self.ties is not None and np.any(self.ties))

    def to_dict(self) -> dict:
        return {
            "v_r": self.v_r.tolist(),
            "q_r": self.q_r.tolist(),
            "worst_kernel": self.worst_kernel.tolist(),
            "residual": float(self.residual),
            "iterations": int(self.iterations),
        }


def robust_bellman_apply(mdp: TabularMDP, spec: AmbiguitySpec, policy, v: np.ndarray) -> np.ndarray:
    """One application of the robust Bellman operator T^pi."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValidationError("value vector must be finite")
    values, _ = spec.support_all(v, want_pstar=False)
    return np.sum(as_probs(policy) * (mdp.cost + mdp.gamma * values), axis=1)


def iteration_cap(gamma: float, tol: float, first_step: float) -> int:
    """Iterations after which a gamma-contraction must have met the stopping rule."""
    scale = max(1.0, first_step)
    target = tol * (1.0 - gamma) / (gamma * scale)
    return int(math.ceil(math.log(target) / math.log(gamma))) + 10


def _stop_threshold(mdp: TabularMDP, tol: float) -> float:
    thresh = tol * (1.0 - mdp.gamma) / mdp.gamma
    # never ask for more than a few ulps of the value scale
    scale = float(np.max(np.abs(mdp.cost))) / (1.0 - mdp.gamma)
    return max(thresh, 8.0 * np.finfo(float).eps * scale)


def evaluate_robust(
    mdp: TabularMDP,
    spec: AmbiguitySpec,
    policy,
    tol: float = DEFAULT_TOL,
    v0: Optional[np.ndarray] = None,
) -> RobustEvaluation:
    """Fixed-point iteration of T^pi until the value is within ``tol`` of V^pi_r."""
    if tol <= 0:
        raise ValidationError("tol must be positive")
    probs = np.ascontiguousarray(as_probs(policy))
    v = np.zeros(mdp.n_states) if v0 is None else np.array(v0, dtype=np.float64)
    thresh = _stop_threshold(mdp, tol)
    first = float(np.max(np.abs(robust_bellman_apply(mdp, spec, probs, v) - v)))
    cap = iteration_cap(mdp.gamma, tol, first)
    cost = np.ascontiguousarray(mdp.cost)
    if K.JIT_ENABLED:
        v, it, step = K.robust_eval_loop(cost, probs, mdp.gamma, *spec.arrays, v, thresh, cap)
    else:
        v, it, step = K.robust_eval_numpy(spec.plan, cost, probs, mdp.gamma, v, thresh, cap)
    if step > thresh:
        raise NonConvergence(f"robust evaluation did not converge in {cap} iterations")
    values, pstar = spec.support_all(v)
    q = mdp.cost + mdp.gamma * values
    residual = float(np.max(np.abs(np.sum(probs * q, axis=1) - v)))
    return RobustEvaluation(
        v_r=v, q_r=q, worst_kernel=pstar, residual=residual, iterations=int(it),
        ties=spec.argmax_ties(v),
    )


def f_rho(mdp: TabularMDP, spec: AmbiguitySpec, policy, rho, tol: float = DEFAULT_TOL) -> float:
    """Expected robust value under the initial distribution rho."""
    return float(as_weights(rho) @ evaluate_robust(mdp, spec, policy, tol).v_r)


def policy_gradient(
    mdp: TabularMDP,
    spec: AmbiguitySpec,
    policy,
    rho,
    tol: float = DEFAULT_TOL,
    evaluation: Optional[RobustEvaluation] = None,
) -> np.ndarray:
    """Subgradient d_rho^{pi,u_pi}(s) Q^pi_r(s,a) / (1-gamma) of f_rho at pi.

    A warning is issued (and the formula still returned) when ``policy`` lies on
    the boundary of the policy simplex.
    """
    probs = as_probs(policy)
    if np.min(probs) <= 0.0:
        warnings.warn("policy has zero entries; gradient is only defined in the interior",
                      BoundaryPolicyWarning, stacklevel=2)
    ev = evaluation or evaluate_robust(mdp, spec, probs, tol)
    d = occupancy(mdp, ev.worst_kernel, probs, rho)
    return d[:, None] * ev.q_r / (1.0 - mdp.gamma)


@dataclass
class InequalityCheck:
    lhs: float
    rhs: float
    holds: bool

    @property
    def slack(self) -> float:
        """Nonnegative when the inequality holds exactly."""
        return self.rhs - self.lhs


class _LowerCheck(InequalityCheck):
    """Check of a lower bound; slack is lhs - rhs."""

    @property
    def slack(self) -> float:
        return self.lhs - self.rhs


def perf_diff_check(
    mdp: TabularMDP,
    spec: AmbiguitySpec,
    pi,
    pi_prime,
    s: int,
    tol: float = DEFAULT_TOL,
    ev_pi: Optional[RobustEvaluation] = None,
    ev_prime: Optional[RobustEvaluation] = None,
) -> InequalityCheck:
    """V^{pi'}_r(s) - V^pi_r(s) <= E_{d_s^{pi',u_pi'}} <Q^pi_r, pi' - pi> / (1-gamma)."""
    p, pp = as_probs(pi), as_probs(pi_prime)
    ev_pi = ev_pi or evaluate_robust(mdp, spec, p, tol)
    ev_prime = ev_prime or evaluate_robust(mdp, spec, pp, tol)
    d = occupancy_matrix(mdp, ev_prime.worst_kernel, pp)[s]
    inner = np.sum(ev_pi.q_r * (pp - p), axis=1)
    lhs = float(ev_prime.v_r[s] - ev_pi.v_r[s])
    rhs = float(d @ inner) / (1.0 - mdp.gamma)
    return InequalityCheck(lhs=lhs, rhs=rhs, holds=lhs <= rhs + 1e-8)


def q_signal_check(
    mdp: TabularMDP,
    spec: AmbiguitySpec,
    pi,
    pi_star,
    s: int,
    tol: float = DEFAULT_TOL,
    ev_pi: Optional[RobustEvaluation] = None,
    ev_star: Optional[RobustEvaluation] = None,
) -> InequalityCheck:
    """E_{d_s^{pi*,u_pi}} <Q^pi_r, pi - pi*> >= (1-gamma)(V^pi_r(s) - V^{pi*}_r(s)).

    The visitation uses the comparator policy pi* but the current policy's worst
    kernel u_pi. ``slack`` is lhs - rhs here, since this is a lower bound.
    """
    p, ps = as_probs(pi), as_probs(pi_star)
    ev_pi = ev_pi or evaluate_robust(mdp, spec, p, tol)
    ev_star = ev_star or evaluate_robust(mdp, spec, ps, tol)
    d = occupancy_matrix(mdp, ev_pi.worst_kernel, ps)[s]
    lhs = float(d @ np.sum(ev_pi.q_r * (p - ps), axis=1))
    rhs = float((1.0 - mdp.gamma) * (ev_pi.v_r[s] - ev_star.v_r[s]))
    return _LowerCheck(lhs=lhs, rhs=rhs, holds=lhs >= rhs - 1e-8)
