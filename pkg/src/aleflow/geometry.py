"""Reference curve and height-graph boundary geometry.

The free boundary is represented as a graph over a fixed smooth closed curve:
a point of the moving interface is ``X(s) + h(s) N(s)`` where ``X`` is the
arc-length parametrization of the reference curve, ``N`` its outward unit
normal and ``h`` a periodic height sample array.  All derivative operations
along the curve are periodic spectral (Fourier) differentiation, so curvature
formulas hold to near machine precision for band-limited data.

Array conventions: boundary scalars are shape ``(n_theta,)``, boundary vectors
``(2, n_theta)`` (component axis first).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import AdmissibilityViolation

# Reject height fields once 1 + b0*h drops below this (keeps the evolution
# denominator well conditioned rather than merely nonzero).
ADMISSIBILITY_FLOOR = 1e-6


def spectral_derivative(f, order, period):
    """Differentiate periodic samples along the last axis.

    Exact for trigonometric polynomials below the Nyquist mode.  For odd
    orders the (unpaired) Nyquist mode is zeroed, the standard choice that
    keeps real data real and the differentiation matrix antisymmetric.
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[-1]
    fh = np.fft.rfft(f, axis=-1)
    k = np.fft.rfftfreq(n, d=1.0 / n) * (2.0 * np.pi / period)
    fh = fh * (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        fh[..., -1] = 0.0
    return np.fft.irfft(fh, n=n, axis=-1)


def fourier_coefficients(f):
    """Complex coefficients c_k with c_0 = mean(f), k = 0..n//2 (rfft layout)."""
    f = np.asarray(f, dtype=float)
    return np.fft.rfft(f) / f.shape[-1]


def resample(f, n_new):
    """Band-limited resampling of periodic samples onto a finer uniform grid."""
    f = np.asarray(f, dtype=float)
    n = f.shape[-1]
    if n_new == n:
        return f.copy()
    fh = np.fft.rfft(f, axis=-1)
    if n % 2 == 0 and n_new > n:
        fh = fh.copy()
        fh[..., -1] *= 0.5  # split the Nyquist mode across +/- k
    return np.fft.irfft(fh, n=n_new, axis=-1) * (n_new / n)


@dataclass(frozen=True)
class ReferenceCurve:
    """Fixed smooth closed curve carrying the boundary grid.

    Attributes
    ----------
    n_theta : number of uniform arc-length samples
    length : total arc length
    s : sample locations, ``s_j = j * length / n_theta``
    X : sampled positions, shape (2, n_theta)
    N : outward unit normals, shape (2, n_theta)
    b0 : curvature samples, ``b0 = -(X'' . N)``
    """

    n_theta: int
    length: float
    s: np.ndarray
    X: np.ndarray
    N: np.ndarray
    b0: np.ndarray
    tangent: np.ndarray = field(default=None)
    b0_prime: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.tangent is None:
            object.__setattr__(
                self, "tangent", spectral_derivative(self.X, 1, self.length))
        if self.b0_prime is None:
            object.__setattr__(
                self, "b0_prime", spectral_derivative(self.b0, 1, self.length))

    @classmethod
    def unit_circle(cls, n_theta):
        s = np.arange(n_theta) * (2.0 * np.pi / n_theta)
        X = np.vstack([np.cos(s), np.sin(s)])
        return cls(n_theta=n_theta, length=2.0 * np.pi, s=s, X=X,
                   N=X.copy(), b0=np.ones(n_theta))

    @property
    def ds(self):
        return self.length / self.n_theta

    def derivative(self, f, order=1):
        return spectral_derivative(f, order, self.length)

    def validate(self, tol=1e-10):
        """Check the arc-length and normal invariants; raise on violation."""
        speed = np.hypot(*self.tangent)
        if np.max(np.abs(speed - 1.0)) > tol:
            raise ValueError("curve is not arc-length parametrized")
        nlen = np.hypot(*self.N)
        if np.max(np.abs(nlen - 1.0)) > tol:
            raise ValueError("normals are not unit length")
        if np.max(np.abs(np.sum(self.N * self.tangent, axis=0))) > tol:
            raise ValueError("normals are not orthogonal to the tangent")


def admissibility_factor(h, curve):
    """Pointwise 1 + b0*h; must stay positive for the graph to be valid."""
    return 1.0 + curve.b0 * np.asarray(h, dtype=float)


def require_admissible(h, curve, what="height field"):
    factor = admissibility_factor(h, curve)
    m = factor.min()
    if m < ADMISSIBILITY_FLOOR:
        raise AdmissibilityViolation(
            f"{what}: min(1 + b0*h) = {m:.3e} < {ADMISSIBILITY_FLOOR:.0e}")
    return factor


def arc_derivative(f, curve, order=1):
    """Arc-length derivative of boundary samples (scalar or (2, n) vector)."""
    if order not in (1, 2, 3):
        raise ValueError(f"order must be 1, 2 or 3, got {order}")
    return curve.derivative(f, order)


def metric(h, curve):
    """Squared speed of the deformed parametrization: (1 + b0 h)^2 + h'^2."""
    factor = require_admissible(h, curve)
    hp = curve.derivative(h)
    return factor**2 + hp**2


def unit_normal(h, curve):
    """Outward unit normal of the deformed boundary, shape (2, n_theta)."""
    factor = require_admissible(h, curve)
    hp = curve.derivative(h)
    g = factor**2 + hp**2
    n = -hp * curve.tangent + factor * curve.N
    return n / np.sqrt(g)


def curvature(h, curve):
    """Curvature of the deformed boundary in reference coordinates.

    Sign convention: the undeformed curve returns ``-b0`` (the unit circle
    gives -1), so the surface-tension traction ``sigma * curvature * N`` is
    inward-restoring for convex perturbations and the equilibrium pressure of
    the unit disk is ``+sigma``.
    """
    factor = require_admissible(h, curve)
    hp = curve.derivative(h)
    hpp = curve.derivative(h, 2)
    g = factor**2 + hp**2
    num = (factor * hpp
           - curve.b0 * (factor**2 + 2.0 * hp**2)
           - h * hp * curve.b0_prime)
    return num / g**1.5


def regularized_curvature(h, h_ee, curve):
    """Curvature with all lower-order height factors replaced by a smoothed
    height; only the leading h'' keeps the raw field.

    Collapses to :func:`curvature` when ``h_ee`` equals ``h``.
    """
    factor = require_admissible(h_ee, curve, what="smoothed height field")
    require_admissible(h, curve)
    hpp = curve.derivative(h, 2)
    hp_ee = curve.derivative(h_ee)
    g = factor**2 + hp_ee**2
    num = (factor * hpp
           - curve.b0 * (factor**2 + 2.0 * hp_ee**2)
           - h_ee * hp_ee * curve.b0_prime)
    return num / g**1.5


def laplace_beltrami(f, curve):
    """Second arc-length derivative (flat Laplace-Beltrami on the curve)."""
    return curve.derivative(f, 2)


def enclosed_area(h, curve):
    """Area enclosed by the deformed boundary via the Green/shoelace quadrature."""
    require_admissible(h, curve)
    gamma = curve.X + h * curve.N
    dgamma = curve.derivative(gamma)
    integrand = gamma[0] * dgamma[1] - gamma[1] * dgamma[0]
    return 0.5 * np.sum(integrand) * curve.ds


def interface_length(h, curve):
    """Arc length of the deformed boundary, integral of sqrt(g)."""
    return np.sum(np.sqrt(metric(h, curve))) * curve.ds


def sobolev_norm(f, s):
    """Periodic Sobolev norm (sum_k (1 + k^2)^s |c_k|^2)^(1/2).

    Coefficients are normalized so c_0 is the mean; s = 0 reduces to the
    root-mean-square of the samples (Parseval).
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[-1]
    c = np.fft.rfft(f) / n
    k = np.arange(c.shape[-1])
    w = (1.0 + k.astype(float)**2) ** s
    mag2 = np.abs(c)**2
    # rfft folds +/-k together except at k=0 (and Nyquist for even n)
    mult = np.full(c.shape[-1], 2.0)
    mult[0] = 1.0
    if n % 2 == 0:
        mult[-1] = 1.0
    return float(np.sqrt(np.sum(w * mult * mag2)))

