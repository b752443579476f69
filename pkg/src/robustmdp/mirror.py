"""Bregman divergences and the per-state mirror-descent step.

Two distance-generating functions are supported: negative entropy (KL) and the
squared Euclidean norm ``w(p) = ||p||^2``. With the latter the divergence is
``||p - q||^2`` and the mirror step is a projected gradient step of size eta/2.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .errors import DomainError

EUCLID_ETA_MAX = 1e300


class MirrorMap(str, Enum):
    KL = "kl"
    EUCLIDEAN = "euclidean"

    @classmethod
    def parse(cls, value) -> "MirrorMap":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError as exc:
            raise ValueError(f"unknown mirror map {value!r}; expected 'kl' or 'euclidean'") from exc


def _xlogy_ratio(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(np.where(p > 0, p, 1.0)) - np.log(q)), 0.0)
    return terms


def bregman(map_, p, q) -> float:
    """D^p_q: KL(p || q) or ||p - q||^2."""
    map_ = MirrorMap.parse(map_)
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if map_ is MirrorMap.EUCLIDEAN:
        return float(np.sum((p - q) ** 2))
    if np.any((q <= 0) & (p > 0)):
        raise DomainError("KL divergence needs p absolutely continuous w.r.t. q")
    return float(np.sum(_xlogy_ratio(p, q)))


def bregman_rows(map_, p: np.ndarray, q: np.ndarray, log_q: np.ndarray | None = None) -> np.ndarray:
    """Per-state divergences for (S, A) tables; ``log_q`` avoids underflow for KL."""
    map_ = MirrorMap.parse(map_)
    if map_ is MirrorMap.EUCLIDEAN:
        return np.sum((p - q) ** 2, axis=1)
    if log_q is None:
        with np.errstate(divide="ignore"):
            log_q = np.log(q)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_p = np.log(np.where(p > 0, p, 1.0))
        terms = np.where(p > 0, p * (log_p - log_q), 0.0)
    return np.sum(terms, axis=1)


def simplex_project(x) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort and threshold).

    Works on a vector or row-wise on a 2-D array. The result is renormalized by
    its sum so that vertices come out exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    flat = x.ndim == 1
    z = np.atleast_2d(x)
    n = z.shape[1]
    u = -np.sort(-z, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    idx = np.arange(1, n + 1)
    cond = u - css / idx > 0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    tau = css[np.arange(z.shape[0]), rho] / (rho + 1.0)
    p = np.maximum(z - tau[:, None], 0.0)
    p /= p.sum(axis=1, keepdims=True)
    return p[0] if flat else p


def _greedy(q: np.ndarray) -> np.ndarray:
    out = np.zeros_like(q)
    out[np.arange(q.shape[0]), np.argmin(q, axis=1)] = 1.0
    return out


def mirror_step(map_, pi_s, q_s, eta: float) -> np.ndarray:
    """argmin_p eta <q_s, p> + D^p_{pi_s} over the simplex; vectorizes over rows."""
    map_ = MirrorMap.parse(map_)
    if not eta > 0:
        raise DomainError("stepsize must be positive")
    pi = np.asarray(pi_s, dtype=np.float64)
    q = np.asarray(q_s, dtype=np.float64)
    flat = pi.ndim == 1
    pi2, q2 = np.atleast_2d(pi), np.atleast_2d(q)
    if map_ is MirrorMap.KL:
        if np.any(pi2 <= 0):
            raise DomainError("KL mirror step needs a strictly positive policy row")
        shifted = q2 - q2.min(axis=1, keepdims=True)
        logits = np.log(pi2) - eta * shifted
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        out = w / w.sum(axis=1, keepdims=True)
    else:
        out = euclidean_step(pi2, q2, eta)
    return out[0] if flat else out


def euclidean_step(pi: np.ndarray, q: np.ndarray, eta: float) -> np.ndarray:
    """Project pi - (eta/2) q, with a greedy fallback once the point overflows."""
    eta_eff = min(eta, EUCLID_ETA_MAX)
    with np.errstate(over="ignore", invalid="ignore"):
        x = pi - 0.5 * eta_eff * (q - q.min(axis=1, keepdims=True))
    if np.all(np.isfinite(x)):
        return simplex_project(x)
    return _greedy(q)


def softmax_log(logits: np.ndarray):
    m = logits.max(axis=1, keepdims=True)
    t = logits - m
    lse = np.log(np.sum(np.exp(t), axis=1, keepdims=True))
    log_p = t - lse
    return np.exp(log_p), log_p


def logits_to_policy(y: np.ndarray, log_eta: float):
    """softmax(exp(log_eta) * y) row-wise, evaluated without forming the product."""
    t = y - y.max(axis=1, keepdims=True)
    with np.errstate(divide="ignore", over="ignore"):
        scaled = np.where(t == 0.0, 0.0, -np.exp(log_eta + np.log(np.where(t < 0, -t, 1.0))))
    return softmax_log(scaled)


def three_point_check(map_, pi_s, q_s, eta: float, p):
    """eta <q, pi+ - p> + D^{pi+}_pi <= D^p_pi - D^p_{pi+} for the step output pi+."""
    from .robust_eval import InequalityCheck

    plus = mirror_step(map_, pi_s, q_s, eta)
    q = np.asarray(q_s, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    lhs = eta * float(q @ (plus - p)) + bregman(map_, plus, pi_s)
    if MirrorMap.parse(map_) is MirrorMap.KL and np.any((plus <= 0) & (p > 0)):
        raise DomainError("step output underflowed; comparator not absolutely continuous")
    rhs = bregman(map_, p, pi_s) - bregman(map_, p, plus)
    return InequalityCheck(lhs=lhs, rhs=rhs, holds=lhs <= rhs + 1e-8)


def divergence_bound(map_, n_actions: int) -> float:
    """max over policies of the divergence from the uniform policy."""
    if MirrorMap.parse(map_) is MirrorMap.KL:
        return float(np.log(n_actions))
    return 2.0
