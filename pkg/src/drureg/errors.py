"""Exception types shared across the package."""


class DruRegError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(DruRegError, ValueError):
    """A scalar parameter is outside its admissible range (gamma < 1, p not in (0,1), ...)."""


class ShapeError(DruRegError, ValueError):
    """An input has the wrong width or length."""


class NumericError(DruRegError, ArithmeticError):
    """A non-finite value appeared where finite arithmetic was required."""


class ConfigError(DruRegError, ValueError):
    """An invalid or inconsistent configuration."""


class SchemaError(DruRegError, ValueError):
    """A dataset, table, or config document does not match the expected schema."""


class InfeasibleError(DruRegError, ValueError):
    """A constrained construction or program has no feasible point."""


class EstimationError(DruRegError, RuntimeError):
    """Not enough usable data to estimate a quantity."""


class UndefinedScoreError(DruRegError, ValueError):
    """A score's denominator is degenerate for every target."""
