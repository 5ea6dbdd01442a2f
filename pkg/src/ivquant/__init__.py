"""Bayesian semiparametric instrumental-variable quantile curves.

Two-equation model with a Dirichlet-process mixture for the joint error,
penalized-spline mean and log-variance functions, and posterior structural
quantiles computed from the predictive error law.
"""

__version__ = "0.1.0"

from .errors import (BracketError, ConfigError, DegenerateCovariate, DomainError, EmptyChain,
                     EmptySupport, InvariantViolation, IVQuantError, SamplerError, SchemaError,
                     SingularCovariance, TruncationOverflow)
from .model import Dataset, EquationDecl, ModelSpec, Priors, SmoothDecl, prior_preset
from .quantile import error_density, inefficiency_factor, structural_quantile
from .sampler import ChainDraws, GibbsSampler, run_chain

__all__ = [
    "BracketError", "ChainDraws", "ConfigError", "Dataset", "DegenerateCovariate", "DomainError",
    "EmptyChain", "EmptySupport", "EquationDecl", "GibbsSampler", "IVQuantError",
    "InvariantViolation", "ModelSpec", "Priors", "SamplerError", "SchemaError",
    "SingularCovariance", "SmoothDecl", "TruncationOverflow", "error_density",
    "inefficiency_factor", "prior_preset", "run_chain", "structural_quantile",
]
