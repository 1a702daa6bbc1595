"""Exception hierarchy.

Errors fall into three families that the command-line front end maps to
distinct exit codes: invalid input (2), numeric failure (3) and exceeded
resource caps (4).
"""


class LindlearnError(Exception):
    """Base class for all package errors."""


class InvalidConfig(LindlearnError, ValueError):
    """Malformed input: bad model, bad parameters, bad flags."""


class NumericFailure(LindlearnError, ArithmeticError):
    """A numerical procedure could not produce a trustworthy result."""


class CapError(LindlearnError):
    """A configured resource cap would be exceeded."""


class SizeMismatch(InvalidConfig):
    pass


class NonHermitianKossakowski(InvalidConfig):
    pass


class NotPSD(InvalidConfig):
    pass


class IdentityTermPresent(InvalidConfig):
    pass


class DegreeTooSmall(InvalidConfig):
    pass


class KappaOutOfRange(InvalidConfig):
    pass


class IdentityInput(InvalidConfig):
    pass


class ZeroRetention(InvalidConfig):
    pass


class NonConvergent(NumericFailure):
    pass


class RankStalled(NumericFailure):
    pass


class Singular(NumericFailure):
    pass


class CapExceeded(CapError):
    pass


class ShotBudgetOverflow(CapError):
    pass


class LocalityCapExceeded(CapError):
    pass
