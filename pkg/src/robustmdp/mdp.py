"""Tabular MDP data model, standard evaluation and nominal-chain analysis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import NotIrreducible, ValidationError

ROW_TOL = 1e-12


@dataclass(frozen=True)
class TabularMDP:
    """Finite MDP with a cost table and a nominal transition kernel.

    Attributes:
        cost: array of shape (S, A).
        gamma: discount factor in (0, 1).
        nominal: array of shape (S, A, S); each ``nominal[s, a]`` is a distribution.
    """

    cost: np.ndarray
    gamma: float
    nominal: np.ndarray

    def __post_init__(self):
        cost = np.array(self.cost, dtype=np.float64)
        nominal = np.array(self.nominal, dtype=np.float64)
        cost.setflags(write=False)
        nominal.setflags(write=False)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "nominal", nominal)
        object.__setattr__(self, "gamma", float(self.gamma))
        if cost.ndim != 2 or nominal.ndim != 3:
            raise ValidationError("cost must be 2-D and nominal 3-D")
        if nominal.shape != (cost.shape[0], cost.shape[1], cost.shape[0]):
            raise ValidationError(
                f"nominal shape {nominal.shape} does not match cost shape {cost.shape}"
            )

    @property
    def n_states(self) -> int:
        return self.cost.shape[0]

    @property
    def n_actions(self) -> int:
        return self.cost.shape[1]

    @property
    def normalized(self) -> bool:
        """True when every cost lies in (0, 1]."""
        return bool(np.all(self.cost > 0.0) and np.all(self.cost <= 1.0))


@dataclass(frozen=True)
class Policy:
    """Row-stochastic table of action probabilities, shape (S, A)."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 2:
            raise ValidationError("policy table must be 2-D")
        if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > ROW_TOL):
            raise ValidationError("policy rows must be probability vectors")

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "Policy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions, n_actions: int) -> "Policy":
        actions = np.asarray(actions, dtype=np.int64)
        probs = np.zeros((actions.size, n_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)


@dataclass(frozen=True)
class StateDist:
    """Probability vector over states."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or np.any(w < 0) or abs(w.sum() - 1.0) > ROW_TOL:
            raise ValidationError("state distribution must be a probability vector")

    @classmethod
    def uniform(cls, n_states: int) -> "StateDist":
        return cls(np.full(n_states, 1.0 / n_states))

    @classmethod
    def point(cls, s: int, n_states: int) -> "StateDist":
        w = np.zeros(n_states)
        w[s] = 1.0
        return cls(w)


def as_probs(policy) -> np.ndarray:
    """Accept a Policy or a raw (S, A) array."""
    if isinstance(policy, Policy):
        return policy.probs
    return np.asarray(policy, dtype=np.float64)


def as_weights(rho) -> np.ndarray:
    if isinstance(rho, StateDist):
        return rho.weights
    return np.asarray(rho, dtype=np.float64)


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_mdp`; ``problems`` is empty when the MDP is valid."""

    problems: list = field(default_factory=list)
    bad_rows: list = field(default_factory=list)
    normalized: bool = True

    @property
    def ok(self) -> bool:
        return not self.problems


def validate_mdp(mdp: TabularMDP, tol: float = ROW_TOL) -> ValidationReport:
    """List every violated invariant instead of raising."""
    report = ValidationReport(normalized=mdp.normalized)
    if not 0.0 < mdp.gamma < 1.0:
        report.problems.append(f"gamma={mdp.gamma} outside (0,1)")
    if not np.all(np.isfinite(mdp.cost)):
        report.problems.append("cost has non-finite entries")
    neg = np.any(mdp.nominal < 0.0, axis=2)
    off = np.abs(mdp.nominal.sum(axis=2) - 1.0) > tol
    for s, a in zip(*np.nonzero(neg | off)):
        report.bad_rows.append((int(s), int(a)))
        report.problems.append(f"nominal row (s={int(s)}, a={int(a)}) is not a distribution")
    return report


def policy_kernel(kernel: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """State transition matrix P^pi(s, s') = sum_a pi(a|s) kernel[s, a, s']."""
    return np.einsum("sa,sat->st", probs, kernel)


def standard_value(mdp: TabularMDP, kernel: np.ndarray, policy) -> np.ndarray:
    """Solve V = c^pi + gamma P^pi V by a dense linear solve."""
    probs = as_probs(policy)
    c_pi = np.sum(probs * mdp.cost, axis=1)
    p_pi = policy_kernel(np.asarray(kernel), probs)
    return np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * p_pi, c_pi)


def q_from_value(mdp: TabularMDP, kernel: np.ndarray, v: np.ndarray) -> np.ndarray:
    return mdp.cost + mdp.gamma * (np.asarray(kernel) @ v)


def standard_q(mdp: TabularMDP, kernel: np.ndarray, policy) -> np.ndarray:
    """Q(s,a) = c(s,a) + gamma sum_s' kernel[s,a,s'] V(s')."""
    return q_from_value(mdp, kernel, standard_value(mdp, kernel, policy))


def occupancy(mdp: TabularMDP, kernel: np.ndarray, policy, rho) -> np.ndarray:
    """Discounted state visitation d = (1-gamma)(I - gamma P^T)^{-1} rho."""
    p_pi = policy_kernel(np.asarray(kernel), as_probs(policy))
    a = np.eye(mdp.n_states) - mdp.gamma * p_pi.T
    return (1.0 - mdp.gamma) * np.linalg.solve(a, as_weights(rho))


def occupancy_matrix(mdp: TabularMDP, kernel: np.ndarray, policy) -> np.ndarray:
    """Row s holds the discounted visitation started from e_s."""
    p_pi = policy_kernel(np.asarray(kernel), as_probs(policy))
    return (1.0 - mdp.gamma) * np.linalg.inv(np.eye(mdp.n_states) - mdp.gamma * p_pi)


def _closed_classes(p_pi: np.ndarray) -> list:
    adj = p_pi > 0.0
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    closed = []
    for c in range(n_comp):
        members = labels == c
        if not np.any(adj[members][:, ~members]):
            closed.append(np.flatnonzero(members))
    return closed


@dataclass
class StationaryResult:
    nu: np.ndarray
    nu_min: float
    state_dist: np.ndarray


def stationary_state_action_dist(mdp: TabularMDP, policy, kernel=None) -> StationaryResult:
    """Stationary distribution nu(s,a) = mu(s) pi(a|s) of the state-action chain.

    ``nu`` has shape (S, A). ``nu_min`` is taken over all pairs, so it is zero
    whenever the policy has zero entries or the chain has transient states.
    """
    probs = as_probs(policy)
    kernel = mdp.nominal if kernel is None else np.asarray(kernel)
    p_pi = policy_kernel(kernel, probs)
    closed = _closed_classes(p_pi)
    if len(closed) != 1:
        raise NotIrreducible(f"induced chain has {len(closed)} closed classes")
    cls = closed[0]
    sub = p_pi[np.ix_(cls, cls)]
    n = cls.size
    a = np.vstack([sub.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    mu_c, *_ = np.linalg.lstsq(a, b, rcond=None)
    mu = np.zeros(mdp.n_states)
    mu[cls] = np.maximum(mu_c, 0.0)
    mu /= mu.sum()
    nu = mu[:, None] * probs
    return StationaryResult(nu=nu, nu_min=float(nu.min()), state_dist=mu)


@dataclass
class AssumptionReport:
    irreducible: bool
    aperiodic: bool
    pi_positive: bool

    @property
    def ok(self) -> bool:
        return self.irreducible and self.aperiodic and self.pi_positive


def _is_primitive(adj: np.ndarray) -> bool:
    """Some power m <= (n-1)^2 + 1 is elementwise positive (Wielandt bound)."""
    n = adj.shape[0]
    target = (n - 1) ** 2 + 1
    base = adj.astype(np.int64)
    result = np.eye(n, dtype=np.int64)
    m = target
    # Boolean exponentiation by squaring; entries clipped to {0, 1}.
    while m:
        if m & 1:
            result = np.minimum(result @ base, 1)
        base = np.minimum(base @ base, 1)
        m >>= 1
    return bool(np.all(result > 0))


def assumption_check(mdp: TabularMDP, policy) -> AssumptionReport:
    """Check irreducibility, aperiodicity and positivity of pi on the nominal chain."""
    probs = as_probs(policy)
    p_pi = policy_kernel(mdp.nominal, probs)
    adj = p_pi > 0.0
    n_comp, _ = connected_components(adj, directed=True, connection="strong")
    irreducible = n_comp == 1
    aperiodic = irreducible and _is_primitive(adj)
    return AssumptionReport(
        irreducible=bool(irreducible),
        aperiodic=bool(aperiodic),
        pi_positive=bool(np.min(probs) > 0.0),
    )
