"""Sparse composite expectile regression with hierarchical gene-environment interactions."""

from .errors import (
    ConditioningError,
    ConfigError,
    DimensionError,
    InputDomainError,
    RankDeficiencyError,
    SelectionError,
)
from .model_core import (
    CoefficientSet,
    Dataset,
    ExpectileGrid,
    FitResult,
    PenaltyConfig,
    build_weights,
    composite_objective,
    effective_interactions,
    expectile_loss,
    mcp_penalty,
)
from .solver import SolverOptions, fit, fit_cer, fit_er, scalar_expectile

__version__ = "0.1.0"
