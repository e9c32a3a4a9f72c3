"""Exception hierarchy shared by all modules."""


class HybridGridError(Exception):
    """Base class for every error raised by the package."""


class NetworkFormatError(HybridGridError, ValueError):
    """The network-description document is malformed or violates a hard invariant."""


class ModelError(HybridGridError, ValueError):
    """A model is structurally unusable for the requested analysis.

    ``diagnostics`` holds the individual validation findings, when known.
    """

    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = tuple(diagnostics)


class SingularAngleError(HybridGridError, ValueError):
    """Coupling angle too close to a multiple of pi; the B matrix is singular."""


class SingularMatrixError(HybridGridError, ArithmeticError):
    """A factorization hit a zero pivot.

    ``bus`` names the bus (or matrix position when no labels are known) whose
    column produced the zero pivot.
    """

    def __init__(self, message, bus=None):
        super().__init__(message)
        self.bus = bus


class FloatingBusError(SingularMatrixError):
    """An admittance row is identically zero."""


class PowerFlowDivergence(HybridGridError, RuntimeError):
    """Power flow did not converge; ``result`` carries the iteration trace."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class JacobianSingularError(SingularMatrixError):
    def __init__(self, message, bus=None, iteration=None):
        super().__init__(message, bus=bus)
        self.iteration = iteration
