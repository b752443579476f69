"""Hot inner loops.

Each loop kernel is written once in numba-compatible Python. With JIT enabled
(the default) it is compiled with ``numba.njit``; with ``ROBUSTMDP_NUMBA=0`` the
same function runs as plain Python over numpy arrays. The support sweep used
inside robust evaluation additionally has a vectorized numpy implementation,
which is what the fallback path uses.

Ambiguity sets are passed around in a compiled array form:

    kind    (S, A) int64    one of the KIND_* codes
    param   (S, A) float64  epsilon (contamination) or radius (l1 ball)
    rows    (S, A, K, S)    scenario rows or contamination Q rows, zero padded
    nrows   (S, A) int64    number of valid rows per pair
    nominal (S, A, S)       nominal kernel
"""

from __future__ import annotations

import os

import numpy as np

KIND_SINGLETON = 0
KIND_SCENARIOS = 1
KIND_CONTAM_FULL = 2
KIND_CONTAM_LIST = 3
KIND_L1 = 4


def _jit_requested() -> bool:
    flag = os.environ.get("ROBUSTMDP_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


try:  # pragma: no cover - exercised implicitly
    import numba as _numba
except ImportError:  # pragma: no cover
    _numba = None

JIT_ENABLED = _jit_requested() and _numba is not None


def maybe_njit(func):
    """Compile ``func`` with numba when enabled, else return it untouched."""
    if JIT_ENABLED:
        return _numba.njit(cache=True)(func)
    return func


def set_num_threads(n: int) -> None:
    """Cap numba's worker pool; no-op on the pure numpy path."""
    if _numba is not None and n > 0:
        _numba.set_num_threads(min(n, _numba.config.NUMBA_NUM_THREADS))


# ---------------------------------------------------------------------------
# single-pair support query


def _pair_argmax(kind, param, rows, nrows, nominal, s, a, v, order, top, out):
    """Write a maximizer of p.v over the pair's ambiguity set into ``out``.

    ``order`` is a stable ascending argsort of ``v`` and ``top`` its lowest-index
    argmax; both only matter for the l1 ball. Returns the attained value.
    """
    n = v.shape[0]
    k = kind[s, a]
    if k == KIND_SCENARIOS:
        best = -np.inf
        best_j = 0
        for j in range(nrows[s, a]):
            val = 0.0
            for t in range(n):
                val += rows[s, a, j, t] * v[t]
            if val > best:
                best = val
                best_j = j
        for t in range(n):
            out[t] = rows[s, a, best_j, t]
    elif k == KIND_CONTAM_FULL:
        eps = param[s, a]
        for t in range(n):
            out[t] = (1.0 - eps) * nominal[s, a, t]
        out[top] += eps
    elif k == KIND_CONTAM_LIST:
        eps = param[s, a]
        best = -np.inf
        best_j = 0
        for j in range(nrows[s, a]):
            val = 0.0
            for t in range(n):
                val += rows[s, a, j, t] * v[t]
            if val > best:
                best = val
                best_j = j
        for t in range(n):
            out[t] = (1.0 - eps) * nominal[s, a, t] + eps * rows[s, a, best_j, t]
    elif k == KIND_L1:
        for t in range(n):
            out[t] = nominal[s, a, t]
        budget = min(0.5 * param[s, a], 1.0 - out[top])
        for i in range(n):
            if budget <= 0.0:
                break
            idx = order[i]
            if idx == top:
                continue
            take = min(budget, out[idx])
            out[idx] -= take
            out[top] += take
            budget -= take
    else:
        for t in range(n):
            out[t] = nominal[s, a, t]
    value = 0.0
    for t in range(n):
        value += out[t] * v[t]
    return value


pair_argmax = maybe_njit(_pair_argmax)


def _support_sweep(kind, param, rows, nrows, nominal, v, values, pstar):
    n_s, n_a = kind.shape
    order = np.argsort(v, kind="mergesort")
    top = np.argmax(v)
    for s in range(n_s):
        for a in range(n_a):
            values[s, a] = pair_argmax(
                kind, param, rows, nrows, nominal, s, a, v, order, top, pstar[s, a]
            )


support_sweep_loop = maybe_njit(_support_sweep)


# ---------------------------------------------------------------------------
# vectorized numpy sweep (fallback path)


class SweepPlan:
    """Per-kind index groups so the numpy sweep can vectorize."""

    def __init__(self, kind, param, rows, nrows, nominal):
        self.kind = kind
        self.param = param
        self.rows = rows
        self.nrows = nrows
        self.nominal = nominal
        self.groups = {}
        for code in (KIND_SCENARIOS, KIND_CONTAM_FULL, KIND_CONTAM_LIST, KIND_L1):
            s_idx, a_idx = np.nonzero(kind == code)
            if s_idx.size:
                self.groups[code] = (s_idx, a_idx)
        self.row_mask = np.arange(rows.shape[2])[None, None, :] < nrows[:, :, None]


def support_sweep_numpy(plan: SweepPlan, v: np.ndarray, want_pstar: bool = True):
    """Vectorized equivalent of the loop sweep. Returns (values, pstar|None)."""
    nominal = plan.nominal
    values = nominal @ v
    pstar = nominal.copy() if want_pstar else None
    top = int(np.argmax(v))

    grp = plan.groups.get(KIND_SCENARIOS)
    if grp is not None:
        s_idx, a_idx = grp
        r = plan.rows[s_idx, a_idx]
        scores = np.where(plan.row_mask[s_idx, a_idx], r @ v, -np.inf)
        j = np.argmax(scores, axis=1)
        chosen = r[np.arange(j.size), j]
        values[s_idx, a_idx] = chosen @ v
        if want_pstar:
            pstar[s_idx, a_idx] = chosen

    grp = plan.groups.get(KIND_CONTAM_FULL)
    if grp is not None:
        s_idx, a_idx = grp
        eps = plan.param[s_idx, a_idx][:, None]
        p = (1.0 - eps) * nominal[s_idx, a_idx]
        p[:, top] += eps[:, 0]
        values[s_idx, a_idx] = p @ v
        if want_pstar:
            pstar[s_idx, a_idx] = p

    grp = plan.groups.get(KIND_CONTAM_LIST)
    if grp is not None:
        s_idx, a_idx = grp
        eps = plan.param[s_idx, a_idx][:, None]
        r = plan.rows[s_idx, a_idx]
        scores = np.where(plan.row_mask[s_idx, a_idx], r @ v, -np.inf)
        j = np.argmax(scores, axis=1)
        p = (1.0 - eps) * nominal[s_idx, a_idx] + eps * r[np.arange(j.size), j]
        values[s_idx, a_idx] = p @ v
        if want_pstar:
            pstar[s_idx, a_idx] = p

    grp = plan.groups.get(KIND_L1)
    if grp is not None:
        s_idx, a_idx = grp
        p = nominal[s_idx, a_idx].copy()
        budget = np.minimum(0.5 * plan.param[s_idx, a_idx], 1.0 - p[:, top])
        budget = np.maximum(budget, 0.0)
        order = np.argsort(v, kind="mergesort")
        order = order[order != top]
        mass = p[:, order]
        before = np.cumsum(mass, axis=1) - mass
        take = np.clip(budget[:, None] - before, 0.0, mass)
        p[:, order] -= take
        p[:, top] += take.sum(axis=1)
        values[s_idx, a_idx] = p @ v
        if want_pstar:
            pstar[s_idx, a_idx] = p

    return values, pstar


# ---------------------------------------------------------------------------
# fixed-point loops


def _robust_eval_loop(cost, pi, gamma, kind, param, rows, nrows, nominal, v0, thresh, max_iter):
    n_s, n_a = cost.shape
    v = v0.copy()
    vn = np.empty(n_s)
    values = np.empty((n_s, n_a))
    scratch = np.empty((n_s, n_a, n_s))
    step = np.inf
    it = 0
    while it < max_iter:
        support_sweep_loop(kind, param, rows, nrows, nominal, v, values, scratch)
        step = 0.0
        for s in range(n_s):
            acc = 0.0
            for a in range(n_a):
                acc += pi[s, a] * (cost[s, a] + gamma * values[s, a])
            vn[s] = acc
            d = abs(acc - v[s])
            if d > step:
                step = d
        v[:] = vn
        it += 1
        if step <= thresh:
            break
    return v, it, step


robust_eval_loop = maybe_njit(_robust_eval_loop)


def _robust_vi_loop(cost, gamma, kind, param, rows, nrows, nominal, v0, thresh, max_iter):
    n_s, n_a = cost.shape
    v = v0.copy()
    vn = np.empty(n_s)
    values = np.empty((n_s, n_a))
    scratch = np.empty((n_s, n_a, n_s))
    step = np.inf
    it = 0
    while it < max_iter:
        support_sweep_loop(kind, param, rows, nrows, nominal, v, values, scratch)
        step = 0.0
        for s in range(n_s):
            best = np.inf
            for a in range(n_a):
                q = cost[s, a] + gamma * values[s, a]
                if q < best:
                    best = q
            vn[s] = best
            d = abs(best - v[s])
            if d > step:
                step = d
        v[:] = vn
        it += 1
        if step <= thresh:
            break
    return v, it, step


robust_vi_loop = maybe_njit(_robust_vi_loop)


def robust_eval_numpy(plan, cost, pi, gamma, v0, thresh, max_iter):
    v = v0.copy()
    step = np.inf
    it = 0
    while it < max_iter:
        values, _ = support_sweep_numpy(plan, v, want_pstar=False)
        vn = np.sum(pi * (cost + gamma * values), axis=1)
        step = float(np.max(np.abs(vn - v)))
        v = vn
        it += 1
        if step <= thresh:
            break
    return v, it, step


def robust_vi_numpy(plan, cost, gamma, v0, thresh, max_iter):
    v = v0.copy()
    step = np.inf
    it = 0
    while it < max_iter:
        values, _ = support_sweep_numpy(plan, v, want_pstar=False)
        vn = np.min(cost + gamma * values, axis=1)
        step = float(np.max(np.abs(vn - v)))
        v = vn
        it += 1
        if step <= thresh:
            break
    return v, it, step


# ---------------------------------------------------------------------------
# trajectory sampling and robust TD


def _sample_chain(cdf_nom, cdf_pi, s0, u_a0, u_next, u_act, out):
    s = s0
    a = np.searchsorted(cdf_pi[s], u_a0, side="right")
    for t in range(out.shape[0]):
        s2 = np.searchsorted(cdf_nom[s, a], u_next[t], side="right")
        a2 = np.searchsorted(cdf_pi[s2], u_act[t], side="right")
        out[t, 0] = s
        out[t, 1] = a
        out[t, 2] = s2
        out[t, 3] = a2
        s = s2
        a = a2


sample_chain = maybe_njit(_sample_chain)


def _pair_q_support(kind, param, rows, nrows, s, a, m):
    """Support of the contamination reference set Q_{s,a} at ``m``."""
    if kind[s, a] == KIND_CONTAM_FULL:
        return np.max(m)
    best = -np.inf
    for j in range(nrows[s, a]):
        val = 0.0
        for t in range(m.shape[0]):
            val += rows[s, a, j, t] * m[t]
        if val > best:
            best = val
    return best


pair_q_support = maybe_njit(_pair_q_support)


def _rtd_loop(traj, cost, pi, gamma, alpha, mode, kind, param, rows, nrows, nominal,
              theta, ref_q, trace_every, trace):
    n_s, n_a = cost.shape
    m = np.zeros(n_s)
    for s in range(n_s):
        acc = 0.0
        for a in range(n_a):
            acc += pi[s, a] * theta[s, a]
        m[s] = acc
    scratch = np.empty(n_s)
    n_trace = 0
    for t in range(traj.shape[0]):
        s = traj[t, 0]
        a = traj[t, 1]
        s2 = traj[t, 2]
        a2 = traj[t, 3]
        if mode == 0:
            order = np.argsort(m, kind="mergesort")
            top = np.argmax(m)
            val = pair_argmax(kind, param, rows, nrows, nominal, s, a, m, order, top, scratch)
            nom = 0.0
            for j in range(n_s):
                nom += nominal[s, a, j] * m[j]
            sigma = val - nom
            target = cost[s, a] + gamma * theta[s2, a2] + gamma * sigma - theta[s, a]
        else:
            eps = param[s, a]
            sigma = 0.0
            if eps > 0.0:
                sigma = pair_q_support(kind, param, rows, nrows, s, a, m)
            target = (cost[s, a] + gamma * (1.0 - eps) * theta[s2, a2]
                      + gamma * eps * sigma - theta[s, a])
        delta = alpha * target
        theta[s, a] += delta
        m[s] += pi[s, a] * delta
        if trace_every > 0 and (t + 1) % trace_every == 0 and n_trace < trace.shape[0]:
            err = 0.0
            for i in range(n_s):
                for j in range(n_a):
                    d = abs(theta[i, j] - ref_q[i, j])
                    if d > err:
                        err = d
            trace[n_trace] = err
            n_trace += 1
    return n_trace


rtd_loop = maybe_njit(_rtd_loop)
