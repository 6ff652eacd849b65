"""Outage effective capacity of HARQ links and buffer-aided diamond relay systems."""

from .channel import (
    ChannelModel,
    Combining,
    EstimatorBudgetError,
    EstimatorConfig,
    Family,
    HopSampler,
    HopSpec,
    Protocol,
    first_failure_prob,
    outage_series,
    outage_series_quadrature,
    pair_gain_cdf,
    sample_gains,
)
from .diamond import (
    DfDelayExponent,
    DiamondEvaluator,
    DiamondSystem,
    PacketSearch,
    Scheme,
    TwoHopCase,
    TwoHopSettings,
    TwoHopSolution,
    df_delay_exponent,
    evaluate_harq_ir,
    optimize_L_diamond,
    relay_hop_chain,
    solve_df,
    solve_two_hop,
    source_hop_chain,
)
from .effcap import (
    DelayExponentFn,
    ExponentRangeError,
    RateSearch,
    delay_exponent,
    invert_delay_exponent,
    optimize_L,
    outage_ec_fixed_L,
    root_u,
    t1_infinite_M_ec,
)
from .harq import HarqChain, build_chain, chain_from_sampler, chain_from_series, goodput, transition_matrix
from .sim import SimConfig, SimReport, simulate_diamond, simulate_one_hop
from .solvers import BracketError
from .tradeoff import (
    ConstraintDomainError,
    DelayConstraint,
    PhiUnboundedError,
    delay_violation,
    j_threshold,
    lambert_w_m1,
    phi,
)

__all__ = [
    "BracketError",
    "ChannelModel",
    "Combining",
    "ConstraintDomainError",
    "DelayConstraint",
    "DelayExponentFn",
    "DfDelayExponent",
    "DiamondEvaluator",
    "DiamondSystem",
    "EstimatorBudgetError",
    "EstimatorConfig",
    "ExponentRangeError",
    "Family",
    "HarqChain",
    "HopSampler",
    "HopSpec",
    "PacketSearch",
    "PhiUnboundedError",
    "Protocol",
    "RateSearch",
    "Scheme",
    "SimConfig",
    "SimReport",
    "TwoHopCase",
    "TwoHopSettings",
    "TwoHopSolution",
    "build_chain",
    "chain_from_sampler",
    "chain_from_series",
    "delay_exponent",
    "delay_violation",
    "df_delay_exponent",
    "evaluate_harq_ir",
    "first_failure_prob",
    "goodput",
    "invert_delay_exponent",
    "j_threshold",
    "lambert_w_m1",
    "optimize_L",
    "optimize_L_diamond",
    "outage_ec_fixed_L",
    "outage_series",
    "outage_series_quadrature",
    "pair_gain_cdf",
    "phi",
    "relay_hop_chain",
    "root_u",
    "sample_gains",
    "simulate_diamond",
    "simulate_one_hop",
    "solve_df",
    "solve_two_hop",
    "source_hop_chain",
    "t1_infinite_M_ec",
    "transition_matrix",
]
