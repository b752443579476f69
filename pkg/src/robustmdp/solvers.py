"""Outer optimization loops: RPMD, SRPMD, robust policy iteration and robust value iteration."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K
from .ambiguity import AmbiguitySpec
from .errors import AssumptionViolated, NoFullSupport, ValidationError
from .mdp import (
    StateDist,
    TabularMDP,
    as_probs,
    as_weights,
    assumption_check,
    occupancy,
    occupancy_matrix,
)
from .mirror import MirrorMap, bregman_rows, euclidean_step, logits_to_policy
from .robust_eval import _stop_threshold, evaluate_robust, iteration_cap

CSV_COLUMNS = ("k", "eta", "f_rho", "gap", "value_decrease_max",
               "divergence_to_opt", "rtd_error", "wall_ms")


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class StepsizeSchedule:
    """Constant or geometrically growing stepsizes.

    For the geometric variant ``eta_k = min(eta0 * ratio**k, eta_cap)``. The cap
    defaults to infinity: the KL step is carried out on normalized logits so
    that arbitrarily large stepsizes neither overflow nor freeze the iterate.
    """

    kind: str = "geometric"
    eta: float = 1.0
    ratio: float = 1.0
    eta_cap: float = math.inf

    def __post_init__(self):
        if self.kind not in ("constant", "geometric"):
            raise ValidationError(f"unknown schedule kind {self.kind!r}")
        if not self.eta > 0:
            raise ValidationError("stepsize must be positive")
        if self.kind == "geometric" and self.ratio < 1.0:
            raise ValidationError("geometric ratio must be at least 1")

    @classmethod
    def constant(cls, eta: float) -> "StepsizeSchedule":
        return cls(kind="constant", eta=float(eta), ratio=1.0)

    @classmethod
    def geometric(cls, eta0: float, ratio: float, eta_cap: float = math.inf) -> "StepsizeSchedule":
        return cls(kind="geometric", eta=float(eta0), ratio=float(ratio), eta_cap=float(eta_cap))

    def log_eta(self, k: int) -> float:
        if self.kind == "constant":
            return math.log(self.eta)
        return min(math.log(self.eta) + k * math.log(self.ratio), math.log(self.eta_cap))

    def eta_at(self, k: int) -> float:
        """Stepsize at iteration k as a float (may be inf past ~1e308)."""
        lg = self.log_eta(k)
        return math.exp(lg) if lg < 709.0 else math.inf

    def describe(self) -> str:
        if self.kind == "constant":
            return f"constant:{self.eta!r}"
        return f"geometric:{self.eta!r},{self.ratio!r}"


@dataclass
class SolverConfig:
    """Settings shared by the solvers.

    ``noise`` switches SRPMD to synthetic mode (uniform entries in [-noise, noise]);
    ``rtd`` switches it to robust TD estimates. ``check_recursion`` records each
    iteration's per-step recursion slack.
    """

    schedule: StepsizeSchedule = field(default_factory=lambda: StepsizeSchedule.geometric(1.0, 2.0))
    map: MirrorMap = MirrorMap.KL
    rho: Optional[np.ndarray] = None
    max_iters: int = 100
    gap_tol: float = 0.0
    eval_tol: float = 1e-12
    seed: int = 0
    noise: Optional[float] = None
    rtd: Optional[object] = None
    check_recursion: bool = False
    keep_history: bool = False

    def __post_init__(self):
        self.map = MirrorMap.parse(self.map)
        if self.max_iters < 1:
            raise ValidationError("max_iters must be at least 1")
        if self.gap_tol < 0 or self.eval_tol <= 0:
            raise ValidationError("tolerances must be positive")

    def rho_for(self, n_states: int) -> np.ndarray:
        if self.rho is None:
            return np.full(n_states, 1.0 / n_states)
        return as_weights(self.rho)


@dataclass
class RunLog:
    """Per-iteration records of a solver run plus the final policy."""

    algo: str
    records: list = field(default_factory=list)
    policy: Optional[np.ndarray] = None
    R: Optional[int] = None
    M_hat: Optional[float] = None
    f_star: Optional[float] = None
    stop_reason: str = ""
    policies: list = field(default_factory=list)
    values: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([r.get(name, np.nan) for r in self.records], dtype=float)

    @property
    def gaps(self) -> np.ndarray:
        return self.column("gap")


# ---------------------------------------------------------------------------
# robust value iteration (reference optimum)


@dataclass
class RVIResult:
    v_star: np.ndarray
    pi_star: np.ndarray
    q_star: np.ndarray
    iterations: int


def greedy_policy(q: np.ndarray) -> np.ndarray:
    """Deterministic policy on the lowest-index argmin of each row."""
    pi = np.zeros_like(q)
    pi[np.arange(q.shape[0]), np.argmin(q, axis=1)] = 1.0
    return pi


def rvi_solve(mdp: TabularMDP, spec: AmbiguitySpec, tol: float = 1e-12,
              v0: Optional[np.ndarray] = None) -> RVIResult:
    """Robust value iteration v <- min_a [c + gamma * max_p p.v] to accuracy ``tol``."""
    if tol <= 0:
        raise ValidationError("tol must be positive")
    v = np.zeros(mdp.n_states) if v0 is None else np.array(v0, dtype=np.float64)
    thresh = _stop_threshold(mdp, tol)
    values, _ = spec.support_all(v, want_pstar=False)
    first = float(np.max(np.abs(np.min(mdp.cost + mdp.gamma * values, axis=1) - v)))
    cap = iteration_cap(mdp.gamma, tol, first)
    cost = np.ascontiguousarray(mdp.cost)
    if K.JIT_ENABLED:
        v, it, _ = K.robust_vi_loop(cost, mdp.gamma, *spec.arrays, v, thresh, cap)
    else:
        v, it, _ = K.robust_vi_numpy(spec.plan, cost, mdp.gamma, v, thresh, cap)
    values, _ = spec.support_all(v, want_pstar=False)
    q = mdp.cost + mdp.gamma * values
    return RVIResult(v_star=v, pi_star=greedy_policy(q), q_star=q, iterations=int(it))


@dataclass
class Reference:
    """Reference optimum used for gap computations."""

    pi_star: np.ndarray
    v_star: np.ndarray
    f_star: float
    worst_kernel: np.ndarray


def reference_optimum(mdp, spec, rho, eval_tol: float = 1e-12) -> Reference:
    rvi = rvi_solve(mdp, spec, tol=1e-12)
    ev = evaluate_robust(mdp, spec, rvi.pi_star, eval_tol)
    return Reference(pi_star=rvi.pi_star, v_star=ev.v_r,
                     f_star=float(as_weights(rho) @ ev.v_r), worst_kernel=ev.worst_kernel)


# ---------------------------------------------------------------------------
# mismatch constants


@dataclass
class Constants:
    M: float
    M_prime: float
    ratio: float
    estimate: bool


def _check_rho(rho: np.ndarray):
    if np.any(rho <= 0):
        raise NoFullSupport("rho must give positive mass to every state")


def _ratio(gamma: float, M: float, M_prime: float) -> float:
    return M_prime / (1.0 - (1.0 - gamma) / M)


def pessimistic_constants(mdp: TabularMDP, spec: AmbiguitySpec, rho, pi_star_opt=None,
                          n_samples: int = 32, seed: int = 0) -> Constants:
    """Mismatch coefficients M, M' and the stepsize growth ratio M'/(1-(1-gamma)/M).

    Without a reference policy the closed-form bounds M = 1/min(rho) and
    M' = 1/((1-gamma) min(rho)) are returned (both are sharp upper bounds that
    follow from (1-gamma) rho <= d <= 1). With a reference policy both are
    estimated from below by maximizing over the nominal kernel, the reference
    policy's worst kernel and the worst kernels of ``n_samples`` random policies.
    """
    rho = as_weights(rho)
    _check_rho(rho)
    singleton = bool(np.all(spec.kind == K.KIND_SINGLETON))
    if mdp.n_states == 1:
        return Constants(M=1.0, M_prime=1.0, ratio=_ratio(mdp.gamma, 1.0, 1.0), estimate=False)
    if pi_star_opt is None:
        M = 1.0 / float(rho.min())
        Mp = 1.0 if singleton else 1.0 / ((1.0 - mdp.gamma) * float(rho.min()))
        return Constants(M=M, M_prime=Mp, ratio=_ratio(mdp.gamma, M, Mp), estimate=False)
    pi_star = as_probs(pi_star_opt)
    kernels = [mdp.nominal, evaluate_robust(mdp, spec, pi_star).worst_kernel]
    rng = np.random.default_rng(seed)
    for _ in range(0 if singleton else n_samples):
        pi = rng.dirichlet(np.ones(mdp.n_actions), size=mdp.n_states)
        kernels.append(evaluate_robust(mdp, spec, pi).worst_kernel)
    ds = np.array([occupancy(mdp, u, pi_star, rho) for u in kernels])
    M = float(np.max(ds / rho))
    Mp = 1.0 if singleton else float(np.max(ds[:, None, :] / ds[None, :, :]))
    return Constants(M=M, M_prime=Mp, ratio=_ratio(mdp.gamma, M, Mp), estimate=True)


def auto_schedule(mdp, spec, rho, eta0: float = 1.0) -> StepsizeSchedule:
    """Geometric schedule whose ratio follows the pessimistic constants."""
    c = pessimistic_constants(mdp, spec, rho)
    return StepsizeSchedule.geometric(eta0, c.ratio)


def mismatch(mdp, kernel, pi_star, rho) -> float:
    """||d_rho^{pi*,u} / rho||_inf for a single kernel u."""
    return float(np.max(occupancy(mdp, kernel, pi_star, rho) / rho))


# ---------------------------------------------------------------------------
# mirror descent iterate bookkeeping


class _Iterate:
    """Current policy with whatever extra state its mirror map needs."""

    def __init__(self, map_: MirrorMap, n_states: int, n_actions: int):
        self.map = map_
        self.probs = np.full((n_states, n_actions), 1.0 / n_actions)
        self.y = np.zeros((n_states, n_actions))
        self.log_eta_prev = 0.0

    def step(self, q: np.ndarray, log_eta: float) -> "_Iterate":
        nxt = _Iterate.__new__(_Iterate)
        nxt.map = self.map
        if self.map is MirrorMap.KL:
            decay = math.exp(self.log_eta_prev - log_eta)
            nxt.y = decay * self.y - q
            nxt.log_eta_prev = log_eta
            nxt.probs, _ = logits_to_policy(nxt.y, log_eta)
        else:
            eta = math.exp(log_eta) if log_eta < 709.0 else math.inf
            nxt.y = self.y
            nxt.log_eta_prev = log_eta
            nxt.probs = euclidean_step(self.probs, q, eta)
        return nxt

    def divergence_from(self, p_star: np.ndarray, log_scale: float) -> np.ndarray:
        """Per-state D(p_star, self) multiplied by exp(-log_scale), overflow free."""
        if self.map is MirrorMap.EUCLIDEAN:
            return np.sum((p_star - self.probs) ** 2, axis=1) * math.exp(-log_scale)
        # log pi = eta_prev * t - lse with t = y - max(y) <= 0
        t = self.y - self.y.max(axis=1, keepdims=True)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            mag = np.where(t < 0, np.exp(self.log_eta_prev - log_scale + np.log(np.where(t < 0, -t, 1.0))), 0.0)
            scaled_logits = -np.exp(self.log_eta_prev + np.log(np.where(t < 0, -t, 1.0)))
        scaled_logits = np.where(t < 0, scaled_logits, 0.0)
        m = scaled_logits.max(axis=1, keepdims=True)
        lse = (m + np.log(np.sum(np.exp(scaled_logits - m), axis=1, keepdims=True)))[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            neg_ent = np.sum(np.where(p_star > 0, p_star * np.log(np.where(p_star > 0, p_star, 1.0)), 0.0), axis=1)
        with np.errstate(invalid="ignore"):
            cross = np.sum(np.where(p_star > 0, p_star * mag, 0.0), axis=1)
        return (neg_ent + lse) * math.exp(-log_scale) + cross


# ---------------------------------------------------------------------------
# core loop shared by RPMD and SRPMD


def _policy_mirror_descent(mdp, spec, config: SolverConfig, algo: str, stochastic: bool,
                           reference: Optional[Reference] = None) -> RunLog:
    rho = config.rho_for(mdp.n_states)
    _check_rho(rho)
    ref = reference or reference_optimum(mdp, spec, rho, config.eval_tol)
    sched = config.schedule
    log = RunLog(algo=algo, f_star=ref.f_star)
    log.meta["schedule"] = sched.describe()
    log.meta["map"] = config.map.value
    rng = np.random.default_rng(config.seed)

    it = _Iterate(config.map, mdp.n_states, mdp.n_actions)
    ev = evaluate_robust(mdp, spec, it.probs, config.eval_tol)
    pending = []  # per-step data for the post-hoc recursion check
    kernels = [mdp.nominal, ref.worst_kernel]
    prev_v = None
    t0 = time.perf_counter()
    for k in range(config.max_iters + 1):
        f = float(rho @ ev.v_r)
        gap = f - ref.f_star
        log_eta = sched.log_eta(k)
        rec = {
            "k": k,
            "eta": sched.eta_at(k),
            "f_rho": f,
            "gap": gap,
            "value_decrease_max": float(np.max(ev.v_r - prev_v)) if prev_v is not None else math.nan,
            "divergence_to_opt": float(rho @ it.divergence_from(ref.pi_star, 0.0)),
            "rtd_error": math.nan,
        }
        log.records.append(rec)
        if config.keep_history:
            log.policies.append(it.probs.copy())
            log.values.append(ev.v_r.copy())
        if k == config.max_iters:
            log.stop_reason = "max_iters"
            break
        if not stochastic and gap <= config.gap_tol:
            log.stop_reason = "gap_tol"
            break

        q = ev.q_r
        if stochastic:
            q, err = _noisy_q(mdp, spec, it.probs, ev.q_r, config, rng, k)
            rec["rtd_error"] = err
        nxt = it.step(q, log_eta)
        ev_next = evaluate_robust(mdp, spec, nxt.probs, config.eval_tol)
        if config.check_recursion:
            d_k = occupancy(mdp, ev.worst_kernel, ref.pi_star, rho)
            kernels.append(ev.worst_kernel)
            div = it.divergence_from(ref.pi_star, log_eta) - nxt.divergence_from(ref.pi_star, log_eta)
            pending.append((k, gap, float(rho @ ev_next.v_r) - ref.f_star, float(d_k @ div),
                            float(np.max(d_k / rho))))
        rec["wall_ms"] = (time.perf_counter() - t0) * 1e3
        prev_v = ev.v_r
        same = np.array_equal(nxt.probs, it.probs)
        it, ev = nxt, ev_next
        if not stochastic and same and config.map is MirrorMap.EUCLIDEAN:
            log.records.append(_final_record(k + 1, sched, rho, ev, ref, prev_v, it))
            log.stop_reason = "fixed_point"
            break
        if not stochastic and same and _is_greedy_fixed_point(it.probs, ev.q_r):
            log.records.append(_final_record(k + 1, sched, rho, ev, ref, prev_v, it))
            log.stop_reason = "fixed_point"
            break
    log.records[-1].setdefault("wall_ms", (time.perf_counter() - t0) * 1e3)
    log.policy = it.probs.copy()
    if config.check_recursion:
        _finish_recursion(mdp, log, pending, kernels, ref, rho, config.map)
    if stochastic and config.map is MirrorMap.EUCLIDEAN and sched.kind == "constant":
        last = len(log.records) - 1
        log.R = int(rng.integers(1, last + 1)) if last >= 1 else 0
    return log


def _is_greedy_fixed_point(probs: np.ndarray, q: np.ndarray) -> bool:
    """A deterministic policy that is greedy for its own robust Q stays put under KL steps."""
    if not np.all((probs == 0.0) | (probs == 1.0)):
        return False
    return bool(np.array_equal(greedy_policy(q), probs))


def _final_record(k, sched, rho, ev, ref, prev_v, it):
    f = float(rho @ ev.v_r)
    return {
        "k": k, "eta": sched.eta_at(k), "f_rho": f, "gap": f - ref.f_star,
        "value_decrease_max": float(np.max(ev.v_r - prev_v)),
        "divergence_to_opt": float(rho @ it.divergence_from(ref.pi_star, 0.0)),
        "rtd_error": math.nan,
    }


def _finish_recursion(mdp, log: RunLog, pending, kernels, ref, rho, map_):
    """Evaluate the per-step recursion with a single mismatch estimate M_hat.

    M_hat is the largest ||d_rho^{pi*,u}/rho||_inf over the nominal kernel, the
    reference policy's worst kernel and every iterate's worst kernel, which is
    exactly what the per-step inequality needs.
    """
    m_vals = [mismatch(mdp, u, ref.pi_star, rho) for u in kernels[:2]]
    m_vals += [p[4] for p in pending]
    M_hat = max(m_vals) if m_vals else 1.0
    log.M_hat = M_hat
    rate = 1.0 - (1.0 - mdp.gamma) / M_hat
    for k, gap_k, gap_next, div_term, _ in pending:
        rhs = rate * gap_k + div_term / M_hat
        log.records[k]["recursion_slack"] = rhs - gap_next


def _noisy_q(mdp, spec, probs, q_exact, config: SolverConfig, rng, k):
    if config.rtd is not None:
        from .rtd import rtd_evaluate

        report = assumption_check(mdp, probs)
        if not report.ok:
            raise AssumptionViolated(f"assumption check failed at iteration {k}: {report}")
        rtd_cfg = config.rtd.with_seed(config.rtd.seed + k)
        theta = rtd_evaluate(mdp, spec, probs, rtd_cfg).theta
        return theta, float(np.max(np.abs(theta - q_exact)))
    e = float(config.noise or 0.0)
    delta = rng.uniform(-e, e, size=q_exact.shape) if e > 0 else np.zeros_like(q_exact)
    return q_exact + delta, float(np.max(np.abs(delta)))


def rpmd_solve(mdp: TabularMDP, spec: AmbiguitySpec, config: SolverConfig,
               reference: Optional[Reference] = None) -> RunLog:
    """Robust policy mirror descent from the uniform policy with exact robust Q."""
    return _policy_mirror_descent(mdp, spec, config, "rpmd", stochastic=False, reference=reference)


def srpmd_solve(mdp: TabularMDP, spec: AmbiguitySpec, config: SolverConfig,
                reference: Optional[Reference] = None) -> RunLog:
    """Stochastic RPMD: each step uses a noisy or RTD-estimated robust Q-table.

    Runs all ``max_iters`` iterations. The exact Q is computed alongside so the
    realized estimate error is logged in the ``rtd_error`` column.
    """
    if config.noise is None and config.rtd is None:
        raise ValidationError("srpmd needs either synthetic noise or an RTD configuration")
    return _policy_mirror_descent(mdp, spec, config, "srpmd", stochastic=True, reference=reference)


def rpi_solve(mdp: TabularMDP, spec: AmbiguitySpec, config: SolverConfig,
              reference: Optional[Reference] = None) -> RunLog:
    """Robust policy iteration: greedy (lowest-index) improvement on the robust Q."""
    rho = config.rho_for(mdp.n_states)
    _check_rho(rho)
    ref = reference or reference_optimum(mdp, spec, rho, config.eval_tol)
    log = RunLog(algo="rpi", f_star=ref.f_star)
    probs = np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)
    ev = evaluate_robust(mdp, spec, probs, config.eval_tol)
    kernels = [mdp.nominal, ref.worst_kernel]
    pending = []
    prev_v = None
    t0 = time.perf_counter()
    for k in range(config.max_iters + 1):
        f = float(rho @ ev.v_r)
        gap = f - ref.f_star
        rec = {
            "k": k, "eta": math.inf, "f_rho": f, "gap": gap,
            "value_decrease_max": float(np.max(ev.v_r - prev_v)) if prev_v is not None else math.nan,
            "divergence_to_opt": float(rho @ bregman_rows(MirrorMap.EUCLIDEAN, ref.pi_star, probs)),
            "rtd_error": math.nan,
        }
        log.records.append(rec)
        if config.keep_history:
            log.policies.append(probs.copy())
            log.values.append(ev.v_r.copy())
        if k == config.max_iters:
            log.stop_reason = "max_iters"
            break
        if gap <= config.gap_tol:
            log.stop_reason = "gap_tol"
            break
        new = greedy_policy(ev.q_r)
        if np.array_equal(new, probs):
            log.stop_reason = "fixed_point"
            break
        ev_next = evaluate_robust(mdp, spec, new, config.eval_tol)
        if config.check_recursion:
            kernels.append(ev.worst_kernel)
            m_k = mismatch(mdp, ev.worst_kernel, ref.pi_star, rho)
            pending.append((k, gap, float(rho @ ev_next.v_r) - ref.f_star, 0.0, m_k))
        rec["wall_ms"] = (time.perf_counter() - t0) * 1e3
        prev_v = ev.v_r
        probs, ev = new, ev_next
    log.records[-1].setdefault("wall_ms", (time.perf_counter() - t0) * 1e3)
    log.policy = probs
    if config.check_recursion:
        _finish_recursion(mdp, log, pending, kernels, ref, rho, MirrorMap.EUCLIDEAN)
    return log


def rvi_log(mdp: TabularMDP, spec: AmbiguitySpec, config: SolverConfig) -> RunLog:
    """Wrap rvi_solve as a single-record RunLog for the command line."""
    rho = config.rho_for(mdp.n_states)
    t0 = time.perf_counter()
    ref = reference_optimum(mdp, spec, rho, config.eval_tol)
    log = RunLog(algo="rvi", f_star=ref.f_star, policy=ref.pi_star, stop_reason="converged")
    log.records.append({
        "k": 0, "eta": math.nan, "f_rho": ref.f_star, "gap": 0.0,
        "value_decrease_max": math.nan, "divergence_to_opt": 0.0, "rtd_error": math.nan,
        "wall_ms": (time.perf_counter() - t0) * 1e3,
    })
    return log


def stationarity_lhs(map_, policies: list, eta: float) -> np.ndarray:
    """(1/eta) sum_t (D(pi_t, pi_{t+1}) + D(pi_{t+1}, pi_t)) per state."""
    total = np.zeros(policies[0].shape[0])
    for a, b in zip(policies[:-1], policies[1:]):
        total += bregman_rows(map_, a, b) + bregman_rows(map_, b, a)
    return total / eta
