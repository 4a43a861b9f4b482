"""Exception hierarchy shared across the package."""


class CopulaTreeError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(CopulaTreeError):
    """Parameter outside the admissible domain of a copula family."""


class BoundaryError(CopulaTreeError):
    """Unit-square point on or outside the boundary where a density is undefined."""


class InsufficientDataError(CopulaTreeError):
    """Too few observations for the requested fit."""


class FitError(CopulaTreeError):
    """Likelihood optimisation failed to produce a finite optimum."""


class RegressionError(CopulaTreeError):
    """Rank-deficient or otherwise invalid regression design."""


class SchemaError(CopulaTreeError):
    """Input data does not conform to the expected schema."""


class ConfigError(CopulaTreeError):
    """Invalid configuration value."""


class ScenarioError(CopulaTreeError):
    """Simulation scenario produces parameters outside the family domain."""


class IngestionError(CopulaTreeError):
    """Malformed row encountered while ingesting raw records."""
