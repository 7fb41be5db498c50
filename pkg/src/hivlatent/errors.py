"""Exception hierarchy shared by every module of the package."""


class HivModelError(Exception):
    """Base class for all errors raised by hivlatent."""


class ParameterError(HivModelError, ValueError):
    """A parameter set or efficacy violates its invariants."""


class InvalidStateError(HivModelError, ValueError):
    """A state vector contains non-finite components."""


class DomainError(HivModelError, ValueError):
    """An argument lies outside the domain of a function (log of a nonpositive value, ratio out of range)."""


class SingularityError(DomainError):
    """A closed form is singular at the requested argument."""


class EndemicAbsentError(DomainError):
    """The endemic equilibrium does not exist because the reproduction number is at most one."""


class NumericFailure(HivModelError, ArithmeticError):
    """A numerical routine failed to deliver a result within its contract."""


class StiffnessError(NumericFailure):
    """The adaptive step size collapsed below the underflow limit."""


class PositivityError(NumericFailure):
    """An integrated state went negative beyond the admissible undershoot."""


class EigenFailure(NumericFailure):
    """The dense eigensolver did not converge or produced a poor residual."""


class VerdictMismatchError(NumericFailure):
    """Closed-form Routh-Hurwitz and numeric spectrum disagree on stability."""


class ConfigError(HivModelError, ValueError):
    """A scenario configuration could not be parsed or validated."""
