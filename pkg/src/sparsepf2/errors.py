"""Exception hierarchy.

The CLI maps :class:`DataError` to exit code 2 and :class:`NumericalError`
to exit code 3.
"""


class DataError(ValueError):
    """Input data or dimensions are unusable."""


class EmptySliceError(DataError):
    """A slice holds no non-zero entries."""


class RankError(DataError):
    """Requested rank is incompatible with the data dimensions."""


class NumericalError(ArithmeticError):
    """An iterative routine failed to converge or produced non-finite values."""


class ConfigError(ValueError):
    """Invalid solver or generator settings."""
