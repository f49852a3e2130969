"""Best, worst and average-case risk profiles of stock portfolios whose
marginal return distributions are known but whose joint distribution is not."""

from .errors import RiskProfError
from .return_model import (
    ALL_OBJECTIVES,
    Case,
    Investor,
    JointTable,
    MarginalDistribution,
    Objective,
    Portfolio,
    RegionSpec,
    ReturnGrid,
    Sense,
    independence_table,
    reduce_objective,
    region_mass,
    validate_marginal,
)
from .greedy_flow import FlowProblem, greedy_flow, min_cut_certificate, worst_case_two_stock
from .portfolio_sweep import enumerate_slope_events, sweep_optimal_portfolio, tree_flow_value
from .contingency_sampler import (
    TransportationPolytope,
    WalkConfig,
    average_objective,
    estimate_average,
    sample_table,
)
from .k_stock import (
    cents_worst_case_exact,
    lp_worst_case_exact,
    optimal_portfolio_fixed_k,
    striping_worst_case,
)

__version__ = "0.1.0"
