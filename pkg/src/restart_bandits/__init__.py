"""Whittle indices for partially observable restless bandits with restart.

Model A: the operator never sees the arm state. Model B: the post-reset state
is revealed whenever the arm is activated. Both reduce to finite information
states after truncating the time since the last activation at ``ell``.
"""
from .arm import (Arm, CostSpec, InfoStateA, InfoStateB, cost_table, default_cost,
                  info_chain, load_arm, make_structured_matrix, sample_reset_pmf,
                  save_arm, step_info, structured_arm, validate_assumptions)
from .dp import (bisection_indices, index_by_bisection, joint_optimal_policy,
                 value_iteration)
from .errors import (AssumptionError, DegenerateIndexError, NotThresholdError,
                     StateSpaceTooLarge)
from .policy_eval import PolicyValue, dn_values, finite_horizon_eval
from .sim import (Fleet, MyopicPolicy, OptimalPolicy, SimConfig, SimResult, WhittlePolicy,
                  alpha_opt, eps_myp, make_fleet, simulate, simulate_many)
from .whittle import whittle_table, whittle_table_A, whittle_table_B

__version__ = "0.1.0"
