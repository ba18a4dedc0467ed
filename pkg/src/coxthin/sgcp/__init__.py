"""Univariate sigmoidal Gaussian Cox process."""
from .bdm import MoveProbs, bdm_log_ratio, bdm_step, sample_conditional_bdm
from .checks import GridCoxOracle, compare_samplers, verify_appendix_b, verify_appendix_c
from .flawed import sample_conditional_flawed_goncalves, sample_conditional_flawed_rao
from .model import (AugmentedState, SgcpParams, log_conditional_density_unnorm, log_joint_density,
                    simulate_sgcp)

__all__ = [
    "AugmentedState", "GridCoxOracle", "MoveProbs", "SgcpParams", "bdm_log_ratio", "bdm_step",
    "compare_samplers", "log_conditional_density_unnorm", "log_joint_density",
    "sample_conditional_bdm", "sample_conditional_flawed_goncalves", "sample_conditional_flawed_rao",
    "simulate_sgcp", "verify_appendix_b", "verify_appendix_c",
]
