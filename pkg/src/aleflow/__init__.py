"""Free-boundary incompressible flow on a deforming disk.

The moving boundary is a height graph over a fixed reference circle, the
domain map is the mode-exact harmonic extension of the displaced boundary,
and time stepping is a penalized, linearized backward-Euler fixed point with
surface-tension traction from a mollifier-regularized curvature.
"""

__version__ = "0.1.0"

from ._kernels import backend_name

__all__ = ["__version__", "backend_name"]
