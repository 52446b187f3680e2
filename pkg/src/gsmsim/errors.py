"""Exception types shared across the package."""


class GsmError(Exception):
    """Base class for all gsmsim errors."""


class InfeasibleConfigError(GsmError):
    """A requested computation is too large or the configuration is invalid.

    Maps to CLI exit code 2.
    """


class NumericalError(GsmError):
    """A numerical operation failed (e.g. a covariance was not positive definite).

    Maps to CLI exit code 3.
    """


class InvalidPatternError(GsmError, ValueError):
    """An antenna support is not a member of the allowed activation-pattern set."""


class MalformedSymbolError(GsmError, ValueError):
    """A nonzero vector entry does not correspond to a constellation point."""
