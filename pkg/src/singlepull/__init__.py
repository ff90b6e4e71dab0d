"""Finite-horizon single-pull restless bandits.

Occupancy-measure LP relaxations with an embedded simplex solver, the SPI
index policy and baselines, a constraint-enforcing simulator, exact
small-instance oracles, and experiment domains.
"""

from .model import (
    ArmModel,
    Instance,
    Population,
    ValidationReport,
    expand_with_dummies,
    load_instance,
    replicate,
    save_instance,
    validate_arm,
    validate_instance,
)
from .lp import (
    DUMMY,
    MEAN_FIELD,
    SPRMAB_LP,
    LpProblem,
    LpSolution,
    build_occupancy_lp,
    solve_lp,
    upper_bound,
    write_lp_text,
)
from .whittle import (
    BracketFail,
    IndexTable,
    NonConvergent,
    q_difference_indices,
    whittle_index_finite,
    whittle_index_infinite,
)
from .policies import (
    ActivationProbabilities,
    POLICY_NAMES,
    compute_chi,
    greedy_budget_select,
    make_policy,
    mean_field_select,
    random_select,
    spi_indices,
    spi_select,
)
from .simulator import (
    EpisodeResult,
    InfeasibleAction,
    Summary,
    evaluate,
    normalize_scores,
    run_episode,
    step,
)
from .oracle import CapExceeded, exact_optimum, exact_policy_value
from .domains import (
    CPAP,
    EHRENFEST,
    MHMH,
    RANDOM,
    DomainSpec,
    closed_form_whittle,
    make_instance,
    make_models,
)
from .simplex import SolverStall

__version__ = "0.1.0"
