"""
calmreg: calmed penalized nonlinear regression.

This package provides the finite-sample toolkit around the calming method
for penalized nonlinear least squares.

Key Components:
- qform_bounds: deviation quantiles for quadratic forms of sub-gaussian vectors
- tilted_moments: cumulant derivatives of tilted scalar noise laws
- model, calming: regression maps, profile estimation and bound evaluators
- semiparam, quad_oracle: orthogonalization and exact quadratic identities
- penalty: penalty-weight selection
- experiments: seeded Monte Carlo harness and CSV reports (imported on demand)
"""

__version__ = "0.1.0"

from .exceptions import (
    CalmregError,
    ValidationError,
    ConfigError,
    DomainError,
    ConditionsUnmetError,
    RangeError,
    NumericalError,
    NoCrossoverError,
)
from .config import CalmregConfig, get_config, reset_config

# The experiment harness is not imported by default
# Use: from calmreg.experiments import MonteCarloHarness

__all__ = [
    'CalmregError',
    'ValidationError',
    'ConfigError',
    'DomainError',
    'ConditionsUnmetError',
    'RangeError',
    'NumericalError',
    'NoCrossoverError',
    'CalmregConfig',
    'get_config',
    'reset_config',
]
