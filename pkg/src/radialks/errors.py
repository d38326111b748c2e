"""Exception types raised across the solver."""


class RadialKSError(Exception):
    """Base class for all solver errors."""


class SingularMatrixError(RadialKSError, ArithmeticError):
    """A direct solve hit a zero pivot."""


class ConvergenceError(RadialKSError):
    """An iterative procedure ran out of iterations.

    ``partial`` carries whatever the procedure had computed when it gave up
    (an eigen-solution, an SCF state, a best iterate).
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class InvalidStateError(RadialKSError):
    """An input object violates an invariant the operation relies on."""
