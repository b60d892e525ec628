"""Exception types raised by the numerical routines."""


class AnnulusTuringError(Exception):
    """Base class for all package errors."""


class NumericalFailure(AnnulusTuringError):
    """A numerical routine could not deliver its accuracy contract."""


class BesselDomainError(AnnulusTuringError, ValueError):
    pass


class BesselOverflow(NumericalFailure, OverflowError):
    pass


class BracketExhausted(NumericalFailure):
    pass


class QuadratureNotConverged(NumericalFailure):
    pass


class LemmaViolation(NumericalFailure):
    """Computed first radial eigenvalue falls outside (n^2/delta^2, n^2)."""


class NoOnset(AnnulusTuringError):
    """No Laplacian eigenvalue ever enters the instability window."""


class SimultaneousEntry(AnnulusTuringError):
    """Two distinct modes become unstable at the same parameter value."""

    def __init__(self, message, modes=(), lambda_c=None):
        super().__init__(message)
        self.modes = tuple(modes)
        self.lambda_c = lambda_c


class EndpointEntry(AnnulusTuringError):
    """The entering eigenvalue sits exactly where the window opens."""


class NearResonance(NumericalFailure):
    pass


class TailNotConverged(NumericalFailure):
    pass


class DegenerateQuadratic(AnnulusTuringError):
    pass


class SolveFailed(NumericalFailure):
    pass


class BlowUp(AnnulusTuringError):
    """Simulation left the bounded region; carries the last finite state."""

    def __init__(self, message, time=None, field=None):
        super().__init__(message)
        self.time = time
        self.field = field


class NonlinearContamination(AnnulusTuringError):
    pass
