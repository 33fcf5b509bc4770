"""Exception hierarchy shared by all computational layers."""


class MaserTurError(Exception):
    """Base class for every error raised by the package."""


class InvalidParams(MaserTurError, ValueError):
    """A parameter is outside its admissible range.

    ``field`` names the offending parameter so front ends can point at it.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class DegenerateKernel(MaserTurError):
    """The untilted generator has more than one stationary state."""


class DegenerateOperation(MaserTurError):
    """A ratio is 0/0 at the requested point (zero current or zero variance)."""


class NumericFailure(MaserTurError):
    """Base class for numerical breakdowns (CLI exit code 3)."""


class EigenSolverFailure(NumericFailure):
    pass


class DegenerateDominantRoot(NumericFailure):
    """Two eigenvalues tie for the largest real part away from chi = 0."""


class StepTooSmall(NumericFailure):
    """Finite-difference cancellation left a large imaginary residual."""


class ZeroC1(NumericFailure):
    """Linear characteristic-polynomial coefficient vanishes."""


class InsufficientHorizon(MaserTurError):
    """Trajectory horizon is too short compared to the relaxation time."""
