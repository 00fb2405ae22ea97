"""Exception hierarchy shared by all modules.

Validation problems (bad input) and numerical failures (a well-formed
problem the solvers could not handle) are kept apart so that callers,
and the command line front end, can react differently.
"""


class FrechetRiskError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(FrechetRiskError, ValueError):
    """Input violates a model or configuration invariant."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class NumericalError(FrechetRiskError, ArithmeticError):
    """A numerical procedure failed on otherwise valid input."""


class ConvergenceError(NumericalError):
    """An iterative scheme did not converge or started to diverge."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class IllPosedError(NumericalError):
    """The optimization problem has no finite solution for these inputs."""
