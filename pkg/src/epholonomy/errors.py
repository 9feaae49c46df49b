"""Exception types raised by the library.

Numerical aborts (EP proximity, coarse steps, lost positivity) share the
``NumericalAbort`` base so the CLI can map them to one exit code.
"""


class EPHolonomyError(Exception):
    pass


class DimensionMismatch(EPHolonomyError, ValueError):
    pass


class NotHermitian(EPHolonomyError, ValueError):
    pass


class NotTimeIndependent(EPHolonomyError, ValueError):
    pass


class EndpointMismatch(EPHolonomyError, ValueError):
    pass


class DomainError(EPHolonomyError, ValueError):
    pass


class NumericalAbort(EPHolonomyError):
    pass


class NearDegenerate(NumericalAbort):
    """Eigenvalue gap below the EP threshold; the eigenbasis is not invertible."""


class AtExceptionalPoint(NearDegenerate):
    pass


class PathThroughEP(NumericalAbort):
    pass


class StepTooCoarse(NumericalAbort):
    pass


class NotDiagonalizedByS(NumericalAbort):
    pass


class PositivityLost(NumericalAbort):
    pass
