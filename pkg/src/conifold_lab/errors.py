"""Exception hierarchy shared by all modules."""


class ConifoldError(Exception):
    """Base class for every error raised by conifold_lab."""


class DomainError(ConifoldError, ValueError):
    """Argument outside the domain where a quantity is defined."""


class ConvergenceError(ConifoldError, RuntimeError):
    pass


class QuadratureError(ConifoldError, RuntimeError):
    pass


class VerificationError(ConifoldError, AssertionError):
    """An internal cross-check against an independent oracle failed."""


class DegreeError(ConifoldError, ValueError):
    pass


class BasisError(ConifoldError, ValueError):
    pass


class PositivityError(ConifoldError, ValueError):
    pass


class SearchError(ConifoldError, RuntimeError):
    pass
