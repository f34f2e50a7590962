"""seqlab: optimal sequential discovery across a stream of experiments.

Conjugate models, discovery boundaries, the truncated dynamic program for the
optimal rejection policy, heuristic baselines and a seeded Monte Carlo harness.
"""
import types as _types

from seqlab._core import BACKEND
from seqlab.boundaries import (
    BoundarySeries,
    acceptance_boundary,
    acceptance_boundary_normal_closed,
    acceptance_boundary_numeric,
    acceptance_series,
    fixed_horizon_accept_prob,
    heuristic_boundary,
    heuristic_series,
)
from seqlab.dp import (
    NormalGrid,
    PolicyTable,
    TruncatedProblem,
    backward_induction,
    solve_optimal,
    value_at,
)
from seqlab.errors import (
    ConfigError,
    DomainError,
    ExhaustionError,
    GridError,
    NonConvergenceError,
    SeqlabError,
)
from seqlab.models import (
    BetaBernoulli,
    DiscoveryCriterion,
    ExperimentState,
    NormalKnownVariance,
    model_from_dict,
    posterior_map,
    posterior_tail,
    transition_distribution,
)
from seqlab.policies import (
    Action,
    BayesSequential,
    FixedN,
    FixedNEarlyStop,
    Heuristic,
    Optimal,
    Policy,
    decide,
    make_policy,
)
from seqlab.prior import RateRecord, fit_beta_mom, fit_prior, ingest_csv, synthetic_population
from seqlab.sim import (
    EmpiricalList,
    MetricsReport,
    PriorSampled,
    SimulationConfig,
    compare_policies,
    reports_to_csv,
    reports_to_json,
    run_until_discovery,
    simulate,
)

__version__ = "0.1.0"

__all__ = [k for k, v in dict(globals()).items() if not k.startswith("_") and not isinstance(v, _types.ModuleType)]
