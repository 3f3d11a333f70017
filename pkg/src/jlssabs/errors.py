"""Exception hierarchy shared across the package."""


class JlssError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(JlssError, ValueError):
    pass


class NonSquare(DimensionMismatch):
    pass


class NotSymmetric(JlssError, ValueError):
    pass


class NotPD(JlssError, ValueError):
    pass


class SingularOperator(JlssError, ArithmeticError):
    pass


class SingularGram(JlssError, ArithmeticError):
    pass


class InvalidNetwork(JlssError, ValueError):
    pass


class Infeasible(JlssError):
    """No certificate exists (or none was found within budget).

    ``radius`` is set when the failure is a small-gain violation.
    """

    def __init__(self, message, radius=None):
        super().__init__(message)
        self.radius = radius


class NotConverged(JlssError):
    pass


class ConditionViolated(JlssError):
    """A geometric or algebraic construction condition failed.

    ``step`` names the construction step (1-9) where the failure surfaced.
    """

    def __init__(self, message, step=None):
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.step = step


class Con3Unsatisfiable(ConditionViolated):
    pass


class Con3deViolated(ConditionViolated):
    pass


class CertificateInvalid(JlssError):
    pass


class MissingGains(JlssError):
    pass


class InvalidArgs(JlssError, ValueError):
    pass


class NegativeInput(InvalidArgs):
    pass


class ConfigInvalid(JlssError, ValueError):
    pass


class TooFewTrials(JlssError, ValueError):
    pass
