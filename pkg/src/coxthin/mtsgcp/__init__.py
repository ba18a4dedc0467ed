"""Multitype SGCP: simulation, Gibbs inference, intensity surfaces and pair correlations."""
from .geweke import geweke_test
from .gibbs import (Controls, Priors, Trace, fit, gibbs_step, gibbs_sweep, grad_log_target_g,
                    initial_gibbs_state, log_target_g)
from .intensity import posterior_intensity_grid
from .model import GibbsState, MtsgcpParams, log_joint_density_mt, sigma, simulate_mtsgcp
from .pcf import PcfResult, pcf

__all__ = [
    "Controls", "GibbsState", "MtsgcpParams", "PcfResult", "Priors", "Trace", "fit", "geweke_test",
    "gibbs_step", "gibbs_sweep", "grad_log_target_g", "initial_gibbs_state", "log_joint_density_mt",
    "log_target_g", "pcf", "posterior_intensity_grid", "sigma", "simulate_mtsgcp",
]
