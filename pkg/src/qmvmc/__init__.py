"""Simulated quantum algorithms for multivariate Monte Carlo estimation of
Markov reward process value functions."""

from .errors import QmvmcError
from .fixtures import (
    Family,
    HardInstanceDescriptor,
    classical_estimate,
    classical_sample_count,
    high_overlap_decode,
    majority_parity_instance,
    single_loop_instance,
)
from .grid import Grid, TrimmedSet, build_grid, radius, radius_bounds, trimmed_set
from .mrp import MrpInstance, RewardSpec, Setting, StateSpace, exact_value, path_independent_instance
from .oracles import CostModel, OracleKind, convert, make_reward_oracle, make_transition_oracle
from .pipeline import Estimate, build_value_oracle, estimate_value, make_estimator_config, solve_mvmc

__all__ = [
    "CostModel", "Estimate", "Family", "Grid", "HardInstanceDescriptor", "MrpInstance", "OracleKind",
    "QmvmcError", "RewardSpec", "Setting", "StateSpace", "TrimmedSet", "build_grid", "build_value_oracle",
    "classical_estimate", "classical_sample_count", "convert", "estimate_value", "exact_value",
    "high_overlap_decode", "majority_parity_instance", "make_estimator_config", "make_reward_oracle",
    "make_transition_oracle", "path_independent_instance", "radius", "radius_bounds", "single_loop_instance",
    "solve_mvmc", "trimmed_set",
]
