"""Exception hierarchy shared across the package.

Exit codes used by the CLI: 2 for configuration problems, 3 for data
problems, 4 for numerical failures.
"""


class CefrError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(CefrError):
    """Invalid configuration: bad schema, missing roles, refused operations."""

    exit_code = 2


class DataError(CefrError):
    """Invalid input data: missing columns, parse failures, bad values."""

    exit_code = 3


class SchemaError(DataError):
    """A referenced column does not exist."""


class ValidationError(DataError):
    """A column exists but its values violate a contract (NaN, non-binary)."""


class DegenerateFoldError(DataError):
    """A cross-fitting complement contains no rows for a required arm/cell."""


class NumericError(CefrError):
    """Numerical failure during estimation."""

    exit_code = 4


class SingularSystemError(NumericError):
    """A symmetric linear system is numerically singular."""


class DegenerateVarianceError(NumericError):
    """All grid points had (numerically) zero variance."""
