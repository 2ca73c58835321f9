"""Exception hierarchy shared across the package."""


class DpSimplexError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(DpSimplexError):
    """Malformed experiment configuration or input file."""


class BudgetError(DpSimplexError):
    """A privacy precondition cannot be met or would be violated at runtime."""


class PlannerError(BudgetError):
    """Parameter planning failed to converge to a feasible schedule."""


class DatasetError(DpSimplexError):
    """Sample budget exhausted or dataset malformed."""


class OracleError(DpSimplexError):
    """An evaluation oracle failed to certify its own accuracy."""
