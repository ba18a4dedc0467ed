"""Simulation and MCMC inference for thinned and coloured point processes."""
__version__ = "0.1.0"
