"""Differentiable additive models with a transformed-feature decorrelation penalty.

The package trains generalized additive models whose per-feature shape
functions are small MLPs (or Fourier seasonality blocks for time series),
optionally penalizing pairwise correlation between the transformed features
so that each feature's contribution stays individually readable.
"""

__version__ = "0.1.0"

from .diffcore import Tape, Tensor
from .errors import (
    ConcurveError,
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    DivergenceError,
    NumericalDomainError,
    SchemaError,
    SweepError,
)

__all__ = [
    "Tape",
    "Tensor",
    "ConcurveError",
    "ConfigError",
    "ContractError",
    "DataError",
    "DimensionError",
    "DivergenceError",
    "NumericalDomainError",
    "SchemaError",
    "SweepError",
    "__version__",
]
