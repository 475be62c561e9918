class ValidationError(ValueError):
    """Bad input values or violated preconditions; maps to CLI exit 2."""


class GenerationError(RuntimeError):
    """A stochastic generator could not satisfy its target (e.g. safety cap hit)."""


class UndefinedCorrelationError(ValueError):
    """Correlation requested on a constant series."""
