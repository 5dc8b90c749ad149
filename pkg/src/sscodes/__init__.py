"""Sparse superposition code toolkit.

Encode sectioned one-hot messages through Gaussian, Hadamard or spatially
coupled operators, transmit over memoryless channels, decode with GAMP, and
analyse thresholds with state evolution and the scalar potential.
"""

__version__ = "0.1.0"

from .message import CodeParams, SectionedMessage, random_message, to_dense, hard_decision, mse, ser
from .channels import ChannelModel, sample_output, capacity, log_likelihood, parse_channel
from .operators import (
    CodingOperator,
    GaussianOperator,
    HadamardOperator,
    CouplingParams,
    CoupledOperator,
    new_gaussian,
    new_hadamard,
    new_coupled,
    parse_operator,
    fwht,
)
from .gamp import GampConfig, GampState, GampDivergenceError, g_in, g_in_var, g_out, g_out_prime_neg, decode
from .se import SeTrajectory, fisher, fisher_numeric, sigma, t_of_e, se_run, error_floor, r_gamp
from .potential import PotentialCurve, phi, u_pot, s_pot, f_pot, find_minima, potential_curve, r_pot

__all__ = [
    "CodeParams", "SectionedMessage", "random_message", "to_dense", "hard_decision", "mse", "ser",
    "ChannelModel", "sample_output", "capacity", "log_likelihood", "parse_channel",
    "CodingOperator", "GaussianOperator", "HadamardOperator", "CouplingParams", "CoupledOperator",
    "new_gaussian", "new_hadamard", "new_coupled", "parse_operator", "fwht",
    "GampConfig", "GampState", "GampDivergenceError", "g_in", "g_in_var", "g_out", "g_out_prime_neg", "decode",
    "SeTrajectory", "fisher", "fisher_numeric", "sigma", "t_of_e", "se_run", "error_floor", "r_gamp",
    "PotentialCurve", "phi", "u_pot", "s_pot", "f_pot", "find_minima", "potential_curve", "r_pot",
]
