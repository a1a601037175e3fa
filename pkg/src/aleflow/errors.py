"""Exception types raised by the solver components."""


class AleflowError(Exception):
    """Base class for all solver errors."""


class AdmissibilityViolation(AleflowError):
    """Height field leaves the graph representation: 1 + b0*h too small."""


class KernelSupportError(AleflowError):
    """Mollifier support would exceed a quarter of the curve length."""


class DegenerateDamping(AleflowError):
    """Damped height equation requested with zero damping parameter."""


class NotDiffeomorphism(AleflowError):
    """ALE map Jacobian determinant is not positive everywhere."""


class GridMismatch(AleflowError):
    """Operation mixing fields that live on different grids."""


class SolverDivergence(AleflowError):
    """An iterative linear solve exceeded its iteration cap."""


class CoefficientSymmetryViolation(AleflowError):
    """Rank-4 coefficient tensor lacks the required index symmetries."""


class FixedPointDivergence(AleflowError):
    """The per-step fixed-point iteration did not converge."""


class SmallnessViolation(AleflowError):
    """Interface height exceeded the smallness threshold (H^1.7 gate)."""


class ConfigParseError(AleflowError):
    """Malformed configuration file."""

    def __init__(self, message, line_no=None, key=None):
        super().__init__(message)
        self.line_no = line_no
        self.key = key


class ConfigValidationError(AleflowError):
    """Configuration values violate a documented invariant."""
