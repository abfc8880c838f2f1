"""Exception hierarchy.

Three families map onto the CLI exit-code contract: validation problems
(exit 2), numeric failures (exit 3) and falsified claims (exit 1).
"""


class AutobidError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(AutobidError, ValueError):
    """Bad input: parameters, scenario files, preconditions."""


class InvalidFamily(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class TargetBelowReserve(ValidationError):
    pass


class NoDensity(ValidationError):
    pass


class Irregular(ValidationError):
    pass


class InfiniteTotalVolume(ValidationError):
    pass


class ZeroVolume(ValidationError):
    pass


class NumericError(AutobidError, ArithmeticError):
    """A numerical kernel could not deliver its contract."""


class NoSignChange(NumericError):
    pass


class MaxIterExceeded(NumericError):
    pass


class NonFiniteIntegrand(NumericError):
    pass


class DivergentTail(NumericError):
    pass


class NoRootInBracket(NumericError):
    pass


class NoConvergence(NumericError):
    def __init__(self, message, last_iterate=None, diagnostics=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.diagnostics = diagnostics or {}


class ClaimViolation(AutobidError, AssertionError):
    """A structural claim failed on a concrete instance.

    ``instance`` carries a JSON-serializable description of the
    counterexample.
    """

    def __init__(self, message, instance=None):
        super().__init__(message)
        self.instance = instance


class ViolationFound(ClaimViolation):
    pass
