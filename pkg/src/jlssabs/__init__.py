"""Reduced-order abstractions of interconnected jump linear stochastic systems.

The package builds abstractions of individual subsystems certified by
quadratic stochastic simulation functions, composes them with a small-gain
argument, evaluates the resulting error and probability bounds and checks
them by Monte Carlo simulation.
"""

from .abstraction import AbstractionResult, BehaviorPreservingData, build_abstraction, \
    check_p_conditions, choose_bhat, solve_con2
from .bounds import GainSlopes, bound_curves, infinite_horizon_bound, moment_bound, \
    pointwise_probability_bound, sup_probability_bound, triangle_bound
from .composition import CompositionCertificate, build_gain_matrices, compose, find_mu
from .errors import *  # noqa: F401,F403
from .model import EXT, JlssSystem, Network, SubsystemSpec, interconnect, validate_network
from .simulate import InputTrajectory, SimConfig, estimate_moment_gap, \
    estimate_sup_exceedance, run_coupled
from .ssf import LinearGains, QuadraticSsf, check_design_inequalities, extract_gains, \
    generator_quadratic, synthesize_mk, verify_ssf

__version__ = "0.1.0"
