"""Exception hierarchy shared by all posred modules."""


class PosredError(Exception):
    """Base class for every error raised by posred."""


class DimensionMismatch(PosredError, ValueError):
    pass


class NonFiniteEntries(PosredError, ValueError):
    pass


class SingularMatrix(PosredError, ArithmeticError):
    pass


class SingularOperator(SingularMatrix):
    """Lyapunov/Stein operator is singular (eigenvalue pairing of A)."""


class NotSymmetric(PosredError, ValueError):
    pass


class NotPSD(PosredError, ValueError):
    pass


class NoConvergence(PosredError, ArithmeticError):
    pass


class SizeBudgetExceeded(PosredError):
    """A hard size cap was hit.

    ``certified_order`` carries partial progress for minor enumeration:
    the largest order whose minors were all checked before the budget ran
    out (``None`` where not applicable).
    """

    def __init__(self, message, certified_order=None, partial=None):
        super().__init__(message)
        self.certified_order = certified_order
        self.partial = partial


class WrongDomain(PosredError, ValueError):
    pass


class DomainMismatch(PosredError, ValueError):
    pass


class NotSiso(PosredError, ValueError):
    pass


class Unstable(PosredError):
    """System failed the Lyapunov stability certificate."""

    def __init__(self, message, min_eigenvalue=float("nan")):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class DegenerateHankel(PosredError):
    pass


class SingularValueTie(PosredError):
    def __init__(self, message, alternatives=()):
        super().__init__(message)
        self.alternatives = tuple(alternatives)


class OrderOutOfRange(PosredError, ValueError):
    pass


class TooShort(PosredError, ValueError):
    pass


class InvalidPoles(PosredError, ValueError):
    pass


class PoleTie(InvalidPoles):
    pass
