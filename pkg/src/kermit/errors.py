"""Exception types shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, data problems
exit 2, numerical failures exit 3.
"""


class KermitError(Exception):
    """Base class for package errors."""


class DataError(KermitError, ValueError):
    """Invalid inputs: bad shapes, malformed files, violated preconditions."""


class NumericalError(KermitError, RuntimeError):
    """A numerical routine failed to meet its accuracy contract."""
