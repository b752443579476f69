"""Hand-built robust MDPs and random benchmark families."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ambiguity import AmbiguitySpec, Contamination, L1Ball, Scenarios, Singleton
from .mdp import Policy, TabularMDP
from .errors import ValidationError


@dataclass
class InstanceBundle:
    """An MDP, its ambiguity set and a metadata record."""

    mdp: TabularMDP
    spec: AmbiguitySpec
    name: str
    params: dict = field(default_factory=dict)
    notes: str = ""

    def __post_init__(self):
        if self.spec.nominal.shape != self.mdp.nominal.shape:
            raise ValidationError("ambiguity set and MDP dimensions disagree")


# ---------------------------------------------------------------------------
# chain example: the nominal optimum is fragile under a nearby kernel


@dataclass
class Example1:
    nominal: InstanceBundle
    perturbed_kernel: np.ndarray
    k: int

    # state indices
    S0 = 0
    L, R = 0, 1

    def left(self, m: int) -> int:
        return m

    def right(self, m: int) -> int:
        return self.k + m

    @property
    def terminal(self) -> int:
        return 2 * self.k


def build_example1(k: int, eps: float, p: float, gamma: float = 0.99) -> Example1:
    """Left/right chain of length ``k``.

    States are ordered S0, S_{1..k,L}, S_{1..k-1,R}, S_{k+1}. Action R at S0
    costs -1 and moves to the absorbing S_{1,R}; action L starts the left chain,
    whose arrival at S_{k,L} is charged -(1+eps) gamma^{-k}, so the discounted
    value of going left is -(1+eps). Forced-move states give both actions the
    same row. The perturbed kernel leaks probability 1-p from each S_{m,L} to
    the absorbing S_{m,R}.
    """
    if k < 2 or not eps > 0 or not 0 < p < 1:
        raise ValidationError("need k >= 2, eps > 0 and p in (0, 1)")
    n = 2 * k + 1
    term = 2 * k
    cost = np.zeros((n, 2))
    nom = np.zeros((n, 2, n))
    nom[0, 0, 1] = 1.0
    nom[0, 1, k + 1] = 1.0
    cost[0, 1] = -1.0
    for m in range(1, k):
        nom[m, :, m + 1] = 1.0
    nom[k, :, term] = 1.0
    cost[k, :] = -(1.0 + eps) * gamma ** (-k)
    for m in range(1, k):
        nom[k + m, :, k + m] = 1.0
    nom[term, :, term] = 1.0

    pert = nom.copy()
    for m in range(1, k):
        pert[m, :, :] = 0.0
        pert[m, :, m + 1] = p
        pert[m, :, k + m] = 1.0 - p

    mdp = TabularMDP(cost, gamma, nom)
    spec = AmbiguitySpec.from_scenario_kernels(nom, [nom, pert])
    bundle = InstanceBundle(
        mdp=mdp, spec=spec, name="example1",
        params={"k": k, "eps": eps, "p": p, "gamma": gamma},
        notes="two-kernel scenario set: nominal chain and leaky chain",
    )
    return Example1(nominal=bundle, perturbed_kernel=pert, k=k)


# ---------------------------------------------------------------------------
# three-state instance where the performance-difference bound carries no signal


@dataclass
class Counterexample:
    bundle: InstanceBundle
    pi: Policy
    pi_star: Policy

    SA, SB, SC = 0, 1, 2
    L, R = 0, 1


def build_counterexample(C: float, gamma: float) -> Counterexample:
    """Three states S_a, S_b, S_c with an adversary acting only at S_c.

    S_a: L costs C and moves to S_c, R costs 0 and moves to S_b.
    S_b: both actions cost 1 and move to S_c.
    S_c: both actions cost 0; the adversary picks any mix of S_a and S_b.
    """
    if not C > 1:
        raise ValidationError("C must exceed 1")
    cost = np.array([[C, 0.0], [1.0, 1.0], [0.0, 0.0]])
    nom = np.zeros((3, 2, 3))
    nom[0, 0, 2] = 1.0
    nom[0, 1, 1] = 1.0
    nom[1, :, 2] = 1.0
    nom[2, 0, 0] = 1.0
    nom[2, 1, 1] = 1.0
    vertices = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    pairs = [[Singleton(), Singleton()], [Singleton(), Singleton()],
             [Scenarios(vertices), Scenarios(vertices)]]
    mdp = TabularMDP(cost, gamma, nom)
    spec = AmbiguitySpec(nom, pairs)
    bundle = InstanceBundle(mdp=mdp, spec=spec, name="counterexample",
                            params={"C": C, "gamma": gamma})
    pi = Policy(np.array([[1.0, 0.0], [0.5, 0.5], [0.5, 0.5]]))
    pi_star = Policy(np.array([[0.0, 1.0], [0.5, 0.5], [0.5, 0.5]]))
    return Counterexample(bundle=bundle, pi=pi, pi_star=pi_star)


# ---------------------------------------------------------------------------
# random families

AMBIGUITY_KINDS = ("singleton", "contamination", "l1ball", "scenarios")


def _random_kernel(rng, n_states, n_actions, branching):
    nom = np.zeros((n_states, n_actions, n_states))
    for s in range(n_states):
        for a in range(n_actions):
            succ = np.sort(rng.choice(n_states, size=branching, replace=False))
            nom[s, a, succ] = rng.dirichlet(np.ones(branching))
    return nom


def build_garnet(
    n_states: int,
    n_actions: int,
    branching: int,
    gamma: float = 0.9,
    ambiguity_kind: str = "contamination",
    ambiguity_param: float = 0.2,
    seed: int = 0,
) -> InstanceBundle:
    """Garnet instance: ``branching`` random successors per pair with Dirichlet(1) weights.

    ``ambiguity_param`` is epsilon for contamination, the radius for the l1
    ball, and the number of extra random kernels for scenarios.
    """
    if not 1 <= branching <= n_states:
        raise ValidationError("branching must lie in [1, n_states]")
    if ambiguity_kind not in AMBIGUITY_KINDS:
        raise ValidationError(f"unknown ambiguity kind {ambiguity_kind!r}")
    rng = np.random.default_rng(seed)
    nom = _random_kernel(rng, n_states, n_actions, branching)
    cost = 1.0 - rng.random((n_states, n_actions))
    if ambiguity_kind == "singleton":
        spec = AmbiguitySpec.uniform(nom, Singleton())
    elif ambiguity_kind == "contamination":
        spec = AmbiguitySpec.uniform(nom, Contamination(float(ambiguity_param)))
    elif ambiguity_kind == "l1ball":
        spec = AmbiguitySpec.uniform(nom, L1Ball(float(ambiguity_param)))
    else:
        extra = [_random_kernel(rng, n_states, n_actions, branching) for _ in range(int(ambiguity_param))]
        spec = AmbiguitySpec.from_scenario_kernels(nom, [nom] + extra)
    mdp = TabularMDP(cost, gamma, nom)
    params = {
        "n_states": n_states, "n_actions": n_actions, "branching": branching,
        "gamma": gamma, "ambiguity_kind": ambiguity_kind,
        "ambiguity_param": ambiguity_param, "seed": seed,
        "rtd_safe": branching == n_states,
    }
    return InstanceBundle(mdp=mdp, spec=spec, name="garnet", params=params)


def build_graded_gap(
    n_states: int = 24,
    gamma: float = 0.9,
    epsilon: float = 0.2,
    base: float = 0.5,
    spread: float = 0.5,
    decay: float = 2.0 ** -0.5,
) -> InstanceBundle:
    """Self-loop states whose two actions differ in cost by geometrically shrinking gaps.

    Action 0 costs ``base`` everywhere; action 1 costs ``base + spread*decay**i``
    at state i. Transitions are identical across actions, so only costs matter
    and the per-state action gaps span many scales. Under bounded Q noise of
    size e the states whose gap is below the noise level are the ones left
    unresolved, which makes the stochastic noise floor scale linearly in e.
    """
    cost = np.empty((n_states, 2))
    cost[:, 0] = base
    cost[:, 1] = base + spread * decay ** np.arange(n_states)
    nom = np.zeros((n_states, 2, n_states))
    idx = np.arange(n_states)
    nom[idx, :, idx] = 1.0
    mdp = TabularMDP(cost, gamma, nom)
    spec = AmbiguitySpec.uniform(nom, Contamination(epsilon))
    params = {"n_states": n_states, "gamma": gamma, "epsilon": epsilon,
              "base": base, "spread": spread, "decay": decay}
    return InstanceBundle(mdp=mdp, spec=spec, name="graded_gap", params=params)
