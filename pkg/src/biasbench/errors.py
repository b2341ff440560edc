"""Exception hierarchy shared by every stage.

The CLI maps these onto exit codes: configuration problems exit with 2,
missing upstream artifacts with 3, and bad input data with 4.
"""


class BiasBenchError(Exception):
    """Base class for all harness errors."""


class ConfigError(BiasBenchError):
    """Invalid configuration value, missing config file, or bad parameter."""


class MissingArtifactError(BiasBenchError):
    """A prerequisite output of an earlier pipeline stage does not exist."""


class DataError(BiasBenchError, ValueError):
    """Input data violates a precondition (empty set, unknown label, ...)."""


class DegenerateInputError(DataError):
    """A statistic is undefined for the given input, e.g. constant vectors."""


class TrainingDivergedError(BiasBenchError, ArithmeticError):
    """Training produced a non-finite loss or parameter."""
