"""Periodic mollification along the boundary curve.

The kernel is the standard compactly supported bump ``exp(-1/(1 - x^2))``
scaled to width ``eps`` and normalized to unit mass under the grid
quadrature, so convolution preserves constants and means exactly and is a
strict L2 contraction.  Convolution is direct quadrature over the support
window (circulant, O(n * support)); two convolutions therefore commute to
machine precision.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateDamping, KernelSupportError


def _bump(x):
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


@dataclass(frozen=True)
class MollifierKernel:
    """Discrete unit-mass kernel table for one smoothing length on one grid."""

    eps: float
    ds: float
    weights: np.ndarray  # odd-length window, already scaled by ds

    @classmethod
    def build(cls, eps, n, length):
        if eps <= 0:
            raise KernelSupportError("smoothing length must be positive")
        if eps >= length / 4.0:
            raise KernelSupportError(
                f"smoothing length {eps:g} puts the kernel support outside "
                f"(-l/4, l/4) for curve length {length:g}")
        ds = length / n
        half = int(np.ceil(eps / ds))
        half = min(half, n // 2 - 1) if n > 3 else half
        offsets = np.arange(-half, half + 1) * ds
        w = _bump(offsets / eps)
        total = w.sum() * ds
        if total <= 0:
            # support narrower than one cell: the kernel acts as the identity
            w = np.zeros_like(w)
            w[half] = 1.0 / ds
            total = 1.0
        w = w / total
        return cls(eps=eps, ds=ds, weights=w * ds)

    @property
    def support_offsets(self):
        half = (len(self.weights) - 1) // 2
        return np.arange(-half, half + 1) * self.ds

    def mass(self):
        return float(self.weights.sum())

    def convolve(self, f):
        # convolve1d flips its weight array; the kernel is even so no-op
        return ndimage.convolve1d(np.asarray(f, dtype=float),
                                  self.weights, axis=-1, mode="wrap")


def mollify(f, eps, curve):
    """Periodic convolution of boundary samples with the unit-mass bump."""
    kern = MollifierKernel.build(eps, curve.n_theta, curve.length)
    return kern.convolve(f)


def double_mollify(h, eps, curve):
    """Two passes of :func:`mollify` with the same smoothing length."""
    kern = MollifierKernel.build(eps, curve.n_theta, curve.length)
    return kern.convolve(kern.convolve(h))


def commutator(f, g, eps, curve):
    """Commutator of convolution and pointwise multiplication.

    Returns ``mollify(f * g) - f * mollify(g)``; its L2 size is bounded by
    ``eps * max|f'| * ||g||`` for smooth f.
    """
    kern = MollifierKernel.build(eps, curve.n_theta, curve.length)
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    return kern.convolve(f * g) - f * kern.convolve(g)


def damped_height_evolution(h0, forcing, eps, dt, n_steps, curve):
    """March the damped interface equation h'' + eps^2 * h_t'' = f.

    Per Fourier mode k != 0 the equation is the linear ODE
    ``d/dt h_k = -f_k / (eps^2 k^2) - h_k / eps^2`` which is integrated
    exactly over each step with the forcing frozen (integrating factor).
    Both spatial derivatives annihilate the mean, so the k = 0 mode is held
    constant.

    ``forcing`` is either a single sample array used for every step or a
    sequence of per-step arrays.  Returns the list of states after each step
    (length ``n_steps``).
    """
    if eps <= 0:
        raise DegenerateDamping(
            "eps = 0 reduces the damped height equation to an algebraic "
            "constraint; a positive damping length is required")
    h0 = np.asarray(h0, dtype=float)
    n = curve.n_theta
    forcing = np.asarray(forcing, dtype=float)
    if forcing.ndim == 1:
        forcing = np.broadcast_to(forcing, (n_steps, n))
    if forcing.shape != (n_steps, n):
        raise ValueError("forcing must be one sample array or one per step")

    k = np.fft.rfftfreq(n, d=1.0 / n) * (2.0 * np.pi / curve.length)
    decay = np.exp(-dt / eps**2)
    hh = np.fft.rfft(h0)
    states = []
    for step in range(n_steps):
        fh = np.fft.rfft(forcing[step])
        # steady state of the per-mode ODE: h_k = -f_k / k^2
        target = np.zeros_like(hh)
        target[1:] = -fh[1:] / k[1:] ** 2
        hh[1:] = target[1:] + (hh[1:] - target[1:]) * decay
        states.append(np.fft.irfft(hh, n=n))
    return states



def mollifier_symbol(eps, curve):
    """Fourier multipliers of the discrete kernel (all in [-1, 1])."""
    kern = MollifierKernel.build(eps, curve.n_theta, curve.length)
    full = np.zeros(curve.n_theta)
    half = (len(kern.weights) - 1) // 2
    idx = (np.arange(-half, half + 1)) % curve.n_theta
    np.add.at(full, idx, kern.weights)
    return np.fft.rfft(full).real
