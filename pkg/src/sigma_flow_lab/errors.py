"""Exception hierarchy shared by all modules."""


class SigmaFlowError(Exception):
    """Base class for every error raised by the package."""


class DomainError(SigmaFlowError, ValueError):
    """An argument lies outside the range where the operation is defined."""


class ConeViolationError(SigmaFlowError):
    """A spectrum (or a node of a field) left the Garding cone.

    ``node`` is the offending grid index when the error comes from a field,
    ``margin`` the smallest sigma_j value found there.
    """

    def __init__(self, message, *, node=None, margin=None, k=None, where=None):
        super().__init__(message)
        self.node = node
        self.margin = margin
        self.k = k
        self.where = where


class FlowStallError(SigmaFlowError):
    """The adaptive integrator could not find an acceptable step."""

    def __init__(self, message, *, state=None, trace=None, node=None):
        super().__init__(message)
        self.state = state
        self.trace = trace
        self.node = node


class FlowTimeoutError(SigmaFlowError):
    """``max_time`` elapsed before the residual dropped below tolerance."""

    def __init__(self, message, *, state=None, trace=None):
        super().__init__(message)
        self.state = state
        self.trace = trace


class ConstructionInfeasibleError(SigmaFlowError):
    """No admissible neck/bubble exists for the requested parameters."""

    def __init__(self, message, *, margin=None):
        super().__init__(message)
        self.margin = margin


class GluingFailureError(ConeViolationError):
    """The glued metric is not admissible somewhere."""
