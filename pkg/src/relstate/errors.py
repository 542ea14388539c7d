"""Exception hierarchy shared by all engines."""


class RelstateError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(RelstateError):
    """Malformed or inconsistent input data."""


class DegenerateBasis(RelstateError):
    """A basis family whose Gram matrix is singular or ill-conditioned."""


class DegenerateMetric(RelstateError):
    """A metric that is singular where an inverse or log-determinant is needed."""


class UndefinedConditional(RelstateError):
    """Conditioning on a reference state with zero amplitude."""


class InvalidGrid(RelstateError):
    """A coordinate grid too small for the requested stencil."""


class StepRejected(RelstateError):
    """An integration step that would break positivity of the metric.

    Parameters
    ----------
    message : str
        Description of the violation.
    suggested_step : float
        A smaller step size worth retrying with.
    """

    def __init__(self, message: str, suggested_step: float):
        super().__init__(message)
        self.suggested_step = suggested_step


class InvalidPath(RelstateError):
    """A path that leaves its chart or has the wrong shape."""


class NoZeroMode(RelstateError):
    """No eigenvalue of the total Hamiltonian lies inside the zero window."""
