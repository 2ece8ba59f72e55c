"""Exception hierarchy shared by solvers, reconstructions and the CLI."""


class QpatError(Exception):
    """Base class for all package errors."""


class ShapeError(QpatError, ValueError):
    """Array shape does not match the grid / quadrature it is used with."""


class CoefficientError(QpatError, ValueError):
    """A coefficient field violates the standing bounds or boundary-layer declaration."""


class PreconditionError(QpatError):
    """A stated precondition (smallness, admissibility, positivity) does not hold.

    The CLI maps this to exit status 2.
    """


class DivergenceError(QpatError):
    """An iteration failed to reach its tolerance within the allotted budget.

    The CLI maps this to exit status 3.
    """

    def __init__(self, message, iterations=None, residual=None, ratio=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.ratio = ratio


class ConfigError(QpatError, ValueError):
    """Malformed or semantically invalid experiment configuration."""
