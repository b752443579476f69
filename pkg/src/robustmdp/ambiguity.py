"""(s,a)-rectangular ambiguity sets and their support queries.

Each state-action pair carries one of four set descriptions. For a value
vector ``v`` the robust operators need ``max_{p in P_sa} p.v`` together with a
maximizing ``p``; ties are broken toward the lowest index everywhere so that the
extracted worst-case kernel is a deterministic function of ``v``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels as K
from .errors import EmptySet, TooLarge, ValidationError

MEMBER_TOL = 1e-10


@dataclass(frozen=True)
class Singleton:
    """Only the nominal row is admissible."""


@dataclass(frozen=True)
class Scenarios:
    """Finite list of admissible rows, shape (n_rows, S). The nominal row must be listed."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.atleast_2d(np.array(self.rows, dtype=np.float64))
        object.__setattr__(self, "rows", rows)
        if rows.shape[0] == 0 or rows.size == 0:
            raise EmptySet("scenario list is empty")


@dataclass(frozen=True)
class Contamination:
    """Mixture (1-eps) P_N + eps Q with Q from the full simplex (``q_rows=None``) or a list."""

    epsilon: float
    q_rows: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValidationError("contamination epsilon must lie in [0, 1]")
        if self.q_rows is not None:
            q = np.atleast_2d(np.array(self.q_rows, dtype=np.float64))
            if q.shape[0] == 0 or q.size == 0:
                raise EmptySet("contamination Q-list is empty")
            object.__setattr__(self, "q_rows", q)

    @property
    def full(self) -> bool:
        return self.q_rows is None


@dataclass(frozen=True)
class L1Ball:
    """Distributions within l1 distance ``radius`` of the nominal row."""

    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValidationError("l1 radius must be nonnegative")


PairSet = Union[Singleton, Scenarios, Contamination, L1Ball]


@dataclass(frozen=True)
class SupportResult:
    value: float
    p_star: np.ndarray


class AmbiguitySpec:
    """Per-pair ambiguity sets anchored at a nominal kernel.

    Build with :meth:`uniform`, :meth:`from_scenario_kernels` or by passing a
    full (S x A) table of pair sets.
    """

    def __init__(self, nominal: np.ndarray, pairs: Sequence[Sequence[PairSet]]):
        nominal = np.array(nominal, dtype=np.float64)
        nominal.setflags(write=False)
        if nominal.ndim != 3 or nominal.shape[0] != nominal.shape[2]:
            raise ValidationError(f"nominal kernel must have shape (S, A, S), got {nominal.shape}")
        n_s, n_a, _ = nominal.shape
        if len(pairs) != n_s or any(len(row) != n_a for row in pairs):
            raise ValidationError("pair table does not match nominal kernel shape")
        self.nominal = nominal
        self.pairs = [list(row) for row in pairs]
        self._compile()

    # -- construction -----------------------------------------------------

    @classmethod
    def uniform(cls, nominal: np.ndarray, pair_set: PairSet) -> "AmbiguitySpec":
        nominal = np.asarray(nominal, dtype=np.float64)
        n_s, n_a, _ = nominal.shape
        if isinstance(pair_set, Scenarios):
            raise ValidationError("uniform scenarios need per-pair rows; use from_scenario_kernels")
        obj = cls(nominal, [[pair_set] * n_a for _ in range(n_s)])
        obj._uniform = pair_set
        return obj

    @classmethod
    def from_scenario_kernels(cls, nominal: np.ndarray, kernels: Sequence[np.ndarray]) -> "AmbiguitySpec":
        """Scenarios whose rows at (s,a) are ``kernel[s, a]`` for each listed kernel."""
        stack = np.asarray(kernels, dtype=np.float64)
        if stack.ndim != 4 or stack.shape[0] == 0:
            raise EmptySet("need at least one scenario kernel")
        n_s, n_a = stack.shape[1], stack.shape[2]
        pairs = [[Scenarios(_dedupe(stack[:, s, a])) for a in range(n_a)] for s in range(n_s)]
        obj = cls(nominal, pairs)
        obj._scenario_kernels = stack
        return obj

    _uniform: Optional[PairSet] = None
    _scenario_kernels: Optional[np.ndarray] = None

    @property
    def n_states(self) -> int:
        return self.nominal.shape[0]

    @property
    def n_actions(self) -> int:
        return self.nominal.shape[1]

    def _compile(self):
        n_s, n_a, _ = self.nominal.shape
        kind = np.zeros((n_s, n_a), dtype=np.int64)
        param = np.zeros((n_s, n_a))
        nrows = np.zeros((n_s, n_a), dtype=np.int64)
        max_rows = 1
        for s in range(n_s):
            for a in range(n_a):
                ps = self.pairs[s][a]
                if isinstance(ps, Scenarios):
                    max_rows = max(max_rows, ps.rows.shape[0])
                elif isinstance(ps, Contamination) and not ps.full:
                    max_rows = max(max_rows, ps.q_rows.shape[0])
        rows = np.zeros((n_s, n_a, max_rows, n_s))
        for s in range(n_s):
            for a in range(n_a):
                ps = self.pairs[s][a]
                if isinstance(ps, Singleton):
                    kind[s, a] = K.KIND_SINGLETON
                elif isinstance(ps, Scenarios):
                    if ps.rows.shape[1] != n_s:
                        raise ValidationError(f"scenario rows at ({s},{a}) have wrong length")
                    _check_rows(ps.rows, f"scenario rows at ({s},{a})")
                    if np.min(np.abs(ps.rows - self.nominal[s, a]).sum(axis=1)) > 1e-12:
                        raise ValidationError(f"nominal row missing from scenarios at ({s},{a})")
                    kind[s, a] = K.KIND_SCENARIOS
                    nrows[s, a] = ps.rows.shape[0]
                    rows[s, a, : nrows[s, a]] = ps.rows
                elif isinstance(ps, Contamination):
                    param[s, a] = ps.epsilon
                    if ps.full:
                        kind[s, a] = K.KIND_CONTAM_FULL
                    else:
                        if ps.q_rows.shape[1] != n_s:
                            raise ValidationError(f"Q rows at ({s},{a}) have wrong length")
                        _check_rows(ps.q_rows, f"Q rows at ({s},{a})")
                        if ps.epsilon > 0 and not _in_hull(ps.q_rows, self.nominal[s, a], 1e-9):
                            raise ValidationError(
                                f"nominal row at ({s},{a}) is outside the hull of the Q-list, "
                                "so the set would not contain it")
                        kind[s, a] = K.KIND_CONTAM_LIST
                        nrows[s, a] = ps.q_rows.shape[0]
                        rows[s, a, : nrows[s, a]] = ps.q_rows
                elif isinstance(ps, L1Ball):
                    kind[s, a] = K.KIND_L1
                    param[s, a] = ps.radius
                else:
                    raise ValidationError(f"unknown pair set {ps!r}")
        self.kind, self.param, self.rows, self.nrows = kind, param, rows, nrows
        self.plan = K.SweepPlan(kind, param, rows, nrows, self.nominal)

    @property
    def arrays(self):
        """Compiled (kind, param, rows, nrows, nominal) tuple used by the kernels."""
        return self.kind, self.param, self.rows, self.nrows, self.nominal

    @property
    def is_contamination(self) -> bool:
        """True when every pair is a contamination set (Singleton counts as eps=0)."""
        return bool(np.all(np.isin(self.kind, (K.KIND_CONTAM_FULL, K.KIND_CONTAM_LIST, K.KIND_SINGLETON))))

    # -- queries ----------------------------------------------------------

    def support_argmax(self, s: int, a: int, v: np.ndarray) -> SupportResult:
        v = np.ascontiguousarray(v, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise ValidationError("value vector must be finite")
        out = np.empty(self.n_states)
        order = np.argsort(v, kind="mergesort")
        top = int(np.argmax(v))
        value = K.pair_argmax(*self.arrays[:4], self.nominal, s, a, v, order, top, out)
        return SupportResult(value=float(value), p_star=out)

    def support_all(self, v: np.ndarray, want_pstar: bool = True):
        """Support values for every pair at once: returns (values (S,A), p_star (S,A,S) or None)."""
        v = np.ascontiguousarray(v, dtype=np.float64)
        if K.JIT_ENABLED:
            values = np.empty((self.n_states, self.n_actions))
            pstar = np.empty(self.nominal.shape)
            K.support_sweep_loop(*self.arrays, v, values, pstar)
            return values, (pstar if want_pstar else None)
        return K.support_sweep_numpy(self.plan, v, want_pstar=want_pstar)

    def sigma_all(self, v: np.ndarray) -> np.ndarray:
        """sigma_{U_sa}(v) = max_{p in P_sa} p.v - P_N(s,a).v for every pair."""
        values, _ = self.support_all(v, want_pstar=False)
        return values - self.nominal @ np.asarray(v, dtype=np.float64)

    def q_support_all(self, m: np.ndarray) -> np.ndarray:
        """Support of each contamination reference set Q_sa at ``m`` (zero for Singleton)."""
        m = np.asarray(m, dtype=np.float64)
        scores = np.where(
            np.arange(self.rows.shape[2])[None, None, :] < self.nrows[:, :, None],
            self.rows @ m,
            -np.inf,
        )
        out = np.where(self.kind == K.KIND_CONTAM_LIST, scores.max(axis=2), 0.0)
        out = np.where(self.kind == K.KIND_CONTAM_FULL, m.max(), out)
        return out

    def epsilon_table(self) -> np.ndarray:
        """Contamination weights per pair (zero for Singleton pairs)."""
        return np.where(np.isin(self.kind, (K.KIND_CONTAM_FULL, K.KIND_CONTAM_LIST)), self.param, 0.0)

    def argmax_ties(self, v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Boolean (S,A) table flagging pairs whose maximizer may be non-unique."""
        v = np.asarray(v, dtype=np.float64)
        top_ties = np.sum(v >= v.max() - tol) > 1
        ties = np.zeros((self.n_states, self.n_actions), dtype=bool)
        for s in range(self.n_states):
            for a in range(self.n_actions):
                k = self.kind[s, a]
                if k == K.KIND_SCENARIOS or k == K.KIND_CONTAM_LIST:
                    r = self.rows[s, a, : self.nrows[s, a]]
                    scores = r @ v
                    best = scores >= scores.max() - tol
                    if np.sum(best) > 1 and np.ptp(r[best], axis=0).max() > tol:
                        ties[s, a] = True
                elif k == K.KIND_CONTAM_FULL:
                    ties[s, a] = top_ties and self.param[s, a] > 0
                elif k == K.KIND_L1:
                    ties[s, a] = top_ties and self.param[s, a] > 0
        return ties

    def is_member(self, s: int, a: int, p: np.ndarray, tol: float = MEMBER_TOL) -> bool:
        """Membership of ``p`` in P_sa within an l1 tolerance."""
        p = np.asarray(p, dtype=np.float64)
        if np.min(p) < -tol or abs(p.sum() - 1.0) > tol:
            return False
        nom = self.nominal[s, a]
        ps = self.pairs[s][a]
        if isinstance(ps, Singleton):
            return np.abs(p - nom).sum() <= tol
        if isinstance(ps, Scenarios):
            return np.min(np.abs(ps.rows - p).sum(axis=1)) <= tol
        if isinstance(ps, L1Ball):
            return np.abs(p - nom).sum() <= ps.radius + tol
        eps = ps.epsilon
        resid = p - (1.0 - eps) * nom
        if eps == 0.0:
            return np.abs(resid).sum() <= tol
        if ps.full:
            return np.min(resid) >= -tol
        return _in_hull(ps.q_rows, resid / eps, tol / eps)


def _dedupe(rows: np.ndarray) -> np.ndarray:
    keep = []
    for r in rows:
        if not any(np.array_equal(r, k) for k in keep):
            keep.append(r)
    return np.array(keep)


def _check_rows(rows: np.ndarray, what: str):
    if np.any(rows < 0) or np.any(np.abs(rows.sum(axis=1) - 1.0) > 1e-12):
        raise ValidationError(f"{what} are not probability vectors")


def _in_hull(points: np.ndarray, q: np.ndarray, tol: float) -> bool:
    from scipy.optimize import nnls

    n = points.shape[0]
    a = np.vstack([points.T, np.ones((1, n)) * 10.0])
    b = np.concatenate([q, [10.0]])
    _, resid = nnls(a, b)
    return resid <= max(tol, 1e-12) * 10.0


# -- module-level query API -------------------------------------------------


def support_argmax(spec: AmbiguitySpec, s: int, a: int, v: np.ndarray) -> SupportResult:
    """Maximize p.v over P_sa; returns the value and a maximizer."""
    return spec.support_argmax(s, a, v)


def support_value_of_U(spec: AmbiguitySpec, s: int, a: int, v: np.ndarray) -> float:
    """Support of the perturbation set U_sa = P_sa - P_N(s,a)."""
    v = np.asarray(v, dtype=np.float64)
    return spec.support_argmax(s, a, v).value - float(spec.nominal[s, a] @ v)


def brute_force_support(spec: AmbiguitySpec, s: int, a: int, v: np.ndarray, grid: Optional[int] = None) -> float:
    """Independent oracle for small instances.

    Finite sets are enumerated, the contamination simplex is checked at its
    vertices and the l1 ball is solved as a linear program (or, when ``grid`` is
    given, by exhaustive search over the simplex lattice of that resolution).
    """
    n = spec.n_states
    if n > 5:
        raise TooLarge("brute-force support supports at most 5 states")
    v = np.asarray(v, dtype=np.float64)
    nom = spec.nominal[s, a]
    ps = spec.pairs[s][a]
    if isinstance(ps, Singleton):
        return float(nom @ v)
    if isinstance(ps, Scenarios):
        return float(max(r @ v for r in ps.rows))
    if isinstance(ps, Contamination):
        base = (1.0 - ps.epsilon) * float(nom @ v)
        cands = np.eye(n) if ps.full else ps.q_rows
        return base + ps.epsilon * float(max(q @ v for q in cands))
    if grid is not None:
        return _l1_grid(nom, ps.radius, v, grid)
    return _l1_lp(nom, ps.radius, v)


def _l1_lp(nom: np.ndarray, radius: float, v: np.ndarray) -> float:
    from scipy.optimize import linprog

    n = nom.size
    # variables (p, t): maximize v.p subject to |p - nom| <= t, sum t <= r, p in simplex
    c = np.concatenate([-v, np.zeros(n)])
    eye = np.eye(n)
    a_ub = np.vstack([
        np.hstack([eye, -eye]),
        np.hstack([-eye, -eye]),
        np.concatenate([np.zeros(n), np.ones(n)])[None, :],
    ])
    b_ub = np.concatenate([nom, -nom, [radius]])
    a_eq = np.concatenate([np.ones(n), np.zeros(n)])[None, :]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0],
                  bounds=[(0, None)] * (2 * n), method="highs")
    return float(-res.fun)


def _l1_grid(nom: np.ndarray, radius: float, v: np.ndarray, grid: int) -> float:
    import itertools

    n = nom.size
    best = float(nom @ v)
    for combo in itertools.combinations_with_replacement(range(n), grid):
        p = np.bincount(combo, minlength=n) / grid
        if np.abs(p - nom).sum() <= radius + 1e-12:
            best = max(best, float(p @ v))
    return best
