"""Tabular robust MDP toolkit: robust evaluation, policy mirror descent and robust TD."""

from ._kernels import JIT_ENABLED
from .ambiguity import (
    AmbiguitySpec,
    Contamination,
    L1Ball,
    Scenarios,
    Singleton,
    brute_force_support,
    support_argmax,
    support_value_of_U,
)
from .instances import (
    InstanceBundle,
    build_counterexample,
    build_example1,
    build_garnet,
    build_graded_gap,
)
from .mdp import (
    Policy,
    StateDist,
    TabularMDP,
    assumption_check,
    occupancy,
    standard_q,
    standard_value,
    stationary_state_action_dist,
    validate_mdp,
)
from .mirror import MirrorMap, bregman, divergence_bound, mirror_step, simplex_project, three_point_check
from .robust_eval import (
    RobustEvaluation,
    evaluate_robust,
    f_rho,
    perf_diff_check,
    policy_gradient,
    q_signal_check,
    robust_bellman_apply,
)
from .rtd import (
    RTDConfig,
    operator_contraction_check,
    rtd_evaluate,
    sample_trajectory,
    stochastic_operator,
)
from .solvers import (
    RunLog,
    SolverConfig,
    StepsizeSchedule,
    pessimistic_constants,
    rpi_solve,
    rpmd_solve,
    rvi_solve,
    srpmd_solve,
)

__version__ = "0.1.0"
