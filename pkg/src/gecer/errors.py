"""Exception types raised across the package."""

import numpy as np


class InputDomainError(ValueError):
    """A numeric input lies outside the domain of the operation."""


class ConfigError(ValueError):
    """Invalid configuration value (penalty, grid, split ratio, ...)."""


class DimensionError(ValueError):
    """Shapes of data and coefficients do not agree."""


class ConditioningError(ArithmeticError):
    """A coordinate subproblem has curvature psi <= 1/r and is not convex."""

    def __init__(self, message, index=None, psi=None):
        super().__init__(message)
        self.index = index
        self.psi = psi


class RankDeficiencyError(np.linalg.LinAlgError):
    """A weighted normal-equation system is singular."""


class SelectionError(RuntimeError):
    """No grid point produced a usable fit."""

    def __init__(self, message, table=None):
        super().__init__(message)
        self.table = table


class DataFormatError(ValueError):
    """A CSV file is missing a column or holds a malformed cell."""
