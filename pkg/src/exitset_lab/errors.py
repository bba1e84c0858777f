"""Exception hierarchy shared by every module."""


class LabError(Exception):
    """Base class for all lab failures."""


class DomainError(LabError):
    """Input lies outside the admissible set (positivity, r < 0, k < 0)."""


class ConvergenceError(LabError):
    """An iterative solver hit its iteration cap."""


class ParamError(LabError):
    """Bubble or cutoff parameters outside the supported window."""


class ResolutionError(LabError):
    """Profile core narrower than the grid can resolve."""


class MaskError(LabError):
    """Region masks violate the required strict inclusions."""


class PositivityError(LabError):
    """A time step produced a non-positive conformal factor."""


class StallError(LabError):
    """Adaptive step size collapsed below the floor."""


class NoProgressError(LabError):
    """Yamabe phase settled at a critical point instead of reaching the strip."""


class DegenerateError(LabError):
    """Singular Gram system in the decomposition."""


class SpecError(LabError):
    """Double-peak parameters violate their invariants."""


class HypothesisError(LabError):
    """The first Dirichlet eigenvalue on the nonnegative region is not positive."""


class SignError(LabError):
    """Slice solution left the positive-coefficient regime."""


class NoSignChangeError(LabError):
    """No sign change of k along the lambda sweep; carries the sweep table."""

    def __init__(self, message, table=None):
        super().__init__(message)
        self.table = table or []


class FitError(LabError):
    """Regression residual too large relative to the fitted signal."""


class ParseError(LabError):
    """Config file unreadable or malformed."""


class ValidationError(LabError):
    """Config violates one or more invariants; all are listed."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
