"""Exception hierarchy shared by the solvers, prediction code and CLI."""


class GBCDError(Exception):
    """Base class for all package errors."""


class ContractViolation(GBCDError, ValueError):
    """An operation was called with arguments outside its contract."""


class RefusalError(GBCDError, ValueError):
    """The request is well-formed but deliberately refused (size caps, zero variance, ...)."""


class NumericalBreakdown(GBCDError, ArithmeticError):
    """A rank-one inverse update met a (near) non-positive Schur complement."""

    def __init__(self, message, schur=None):
        super().__init__(message)
        self.schur = schur


class NumericalFailure(GBCDError, ArithmeticError):
    """A solve could not continue; ``report`` holds whatever progress was made."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NonConvergence(GBCDError):
    """Raised by :func:`gbcdgp.predict.fit` when the solver stops short of tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
