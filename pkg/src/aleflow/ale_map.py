"""Reference-disk grid, harmonic-extension ALE map, and velocity transforms.

The reference domain is the unit disk.  Grids are polar with a radially
staggered layout (no node at the origin, no node on the boundary ring);
angular derivatives are spectral, radial derivatives are second-order finite
differences, and boundary traces come from one-sided quadratic extrapolation.
Fields carry Cartesian components: shape ``(n_r, n_theta)`` for scalars,
``(2, n_r, n_theta)`` for vectors, ``(2, 2, n_r, n_theta)`` for 2-tensors
(first index row/component, second index derivative direction).

The ALE map is the harmonic extension of the displaced boundary, computed
mode-exactly (``r^|k|`` lift of the angular Fourier modes), so its gradient,
Jacobian determinant and inverse come from analytic differentiation of the
modal expansion rather than grid stencils.
"""

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .errors import GridMismatch, NotDiffeomorphism
from .geometry import metric, spectral_derivative, unit_normal

_TRACE_POINTS = 4  # one-sided stencil width at the boundary ring


def _one_sided_weights(offsets, deriv):
    """Weights reproducing the deriv-th derivative at 0 from nodes at offsets."""
    offsets = np.asarray(offsets, dtype=float)
    p = len(offsets)
    vand = np.vander(offsets, p, increasing=True).T  # vand[m, j] = offsets[j]^m
    rhs = np.zeros(p)
    rhs[deriv] = math.factorial(deriv)
    return np.linalg.solve(vand, rhs)


@dataclass(frozen=True)
class DiskGrid:
    """Staggered polar grid on the unit disk with quadrature and derivatives."""

    n_r: int
    n_theta: int

    @property
    def dr(self):
        return 1.0 / self.n_r

    @property
    def dtheta(self):
        return 2.0 * np.pi / self.n_theta

    @cached_property
    def r(self):
        return (np.arange(self.n_r) + 0.5) / self.n_r

    @cached_property
    def theta(self):
        return np.arange(self.n_theta) * self.dtheta

    @cached_property
    def weights(self):
        """Quadrature weights r*dr*dtheta; they sum to pi exactly."""
        return np.broadcast_to(
            (self.r * self.dr * self.dtheta)[:, None],
            (self.n_r, self.n_theta)).copy()

    @cached_property
    def cos_t(self):
        return np.cos(self.theta)

    @cached_property
    def sin_t(self):
        return np.sin(self.theta)

    @cached_property
    def inv_r(self):
        return (1.0 / self.r)[:, None]

    @cached_property
    def xy(self):
        """Cartesian node coordinates, shape (2, n_r, n_theta)."""
        return np.stack([np.outer(self.r, self.cos_t),
                         np.outer(self.r, self.sin_t)])

    @cached_property
    def _d_r_matrix(self):
        """Radial part acting on same-angle samples.

        Central differences everywhere; the innermost row pairs with a ghost
        ring through the origin (see ``_d_r_reflect``), the outermost row is
        a third-order one-sided closure (the ring at r = 1 - dr/2 is the last
        physical sample).
        """
        n, d = self.n_r, self.dr
        mat = np.zeros((n, n))
        for i in range(1, n - 1):
            mat[i, i - 1] = -0.5 / d
            mat[i, i + 1] = 0.5 / d
        mat[0, 1] = 0.5 / d  # partner entry lives in _d_r_reflect
        end = np.array([-11.0 / 6.0, 3.0, -1.5, 1.0 / 3.0]) / d
        mat[n - 1, n - 4:] = -end[::-1]
        return mat

    @cached_property
    def _d_r_reflect(self):
        """Ghost-ring coefficients: the sample at -dr/2 is the +dr/2 sample
        rotated by pi (exact for any single-valued field on the disk)."""
        n, d = self.n_r, self.dr
        mat = np.zeros((n, n))
        mat[0, 0] = -0.5 / d
        return mat

    @cached_property
    def _d_r_matrix_t(self):
        return self._d_r_matrix.T.copy()

    @cached_property
    def _d_r_reflect_t(self):
        return self._d_r_reflect.T.copy()

    def _rotate_half(self, f):
        return np.roll(f, self.n_theta // 2, axis=-1)

    @cached_property
    def _trace_offsets(self):
        # distances of the last stencil nodes from r = 1 (negative, inside)
        idx = np.arange(self.n_r - _TRACE_POINTS, self.n_r)
        return self.r[idx] - 1.0

    @cached_property
    def trace_value_weights(self):
        return _one_sided_weights(self._trace_offsets, 0)

    @cached_property
    def trace_deriv_weights(self):
        return _one_sided_weights(self._trace_offsets, 1)

    # -- derivative building blocks ------------------------------------------

    def ddr(self, f):
        out = np.einsum("ab,...bt->...at", self._d_r_matrix, f)
        out += np.einsum("ab,...bt->...at", self._d_r_reflect,
                         self._rotate_half(f))
        return out

    def ddr_t(self, f):
        out = np.einsum("ab,...bt->...at", self._d_r_matrix_t, f)
        out += self._rotate_half(
            np.einsum("ab,...bt->...at", self._d_r_reflect_t, f))
        return out

    def ddtheta(self, f, order=1):
        return spectral_derivative(f, order, 2.0 * np.pi)

    def ddtheta_t(self, f):
        return -self.ddtheta(f)

    def grad_scalar(self, f):
        """Cartesian gradient of a scalar field: out[j] = df/dx_j."""
        fr = self.ddr(f)
        ft = self.ddtheta(f) * self.inv_r
        return np.stack([self.cos_t * fr - self.sin_t * ft,
                         self.sin_t * fr + self.cos_t * ft])

    def grad_scalar_t(self, g):
        """Plain-dot transpose of :meth:`grad_scalar` (for weak-form adjoints)."""
        a = self.cos_t * g[0] + self.sin_t * g[1]
        b = (-self.sin_t * g[0] + self.cos_t * g[1]) * self.inv_r
        return self.ddr_t(a) + self.ddtheta_t(b)

    def grad_vector(self, w):
        """out[i, j] = d w^i / d x_j, shape (2, 2, n_r, n_theta)."""
        return np.stack([self.grad_scalar(w[0]), self.grad_scalar(w[1])])

    def grad_vector_t(self, t):
        return np.stack([self.grad_scalar_t(t[0]), self.grad_scalar_t(t[1])])

    def divergence(self, w):
        g0 = self.grad_scalar(w[0])
        g1 = self.grad_scalar(w[1])
        return g0[0] + g1[1]

    def divergence_t(self, q):
        zero = np.zeros_like(q)
        out0 = self.grad_scalar_t(np.stack([q, zero]))
        out1 = self.grad_scalar_t(np.stack([zero, q]))
        return np.stack([out0, out1])

    def curl(self, w):
        """Scalar curl d(w_y)/dx - d(w_x)/dy."""
        g0 = self.grad_scalar(w[0])
        g1 = self.grad_scalar(w[1])
        return g1[0] - g0[1]

    def curl_t(self, q):
        zero = np.zeros_like(q)
        out0 = self.grad_scalar_t(np.stack([zero, -q]))
        out1 = self.grad_scalar_t(np.stack([q, zero]))
        return np.stack([out0, out1])

    # -- radial-face operators (conservative weak forms) ------------------------
    #
    # Radial fluxes of the implicit weak forms live on the faces between the
    # rings (face f at radius (f+1)*dr; the last face is the boundary circle).
    # Face differences telescope exactly against the face quadrature, so the
    # weak operator has no one-sided closure rows: the boundary face carries
    # only tangential-derivative terms, and the natural boundary condition
    # enters purely through the load.

    @cached_property
    def r_faces(self):
        return (np.arange(self.n_r) + 1.0) * self.dr

    @cached_property
    def face_weights(self):
        """Quadrature for face-sampled integrands: midpoint over the interior
        faces plus the trapezoid end correction for the boundary half cell."""
        w = (self.r_faces * self.dr * self.dtheta).copy()
        w[-1] = 0.5 * self.dr * self.dtheta
        return np.broadcast_to(w[:, None], (self.n_r, self.n_theta)).copy()

    @cached_property
    def _d_face(self):
        n, d = self.n_r, self.dr
        mat = np.zeros((n, n))
        for f in range(n - 1):
            mat[f, f] = -1.0 / d
            mat[f, f + 1] = 1.0 / d
        # boundary face: one-sided trace-stencil derivative at r = 1
        mat[n - 1, n - _TRACE_POINTS:] = self.trace_deriv_weights
        return mat

    @cached_property
    def _m_face(self):
        """Cubic interpolation of ring samples onto the faces.

        Plain two-point averaging is O(dr^2/r^2) in relative terms near the
        axis, which the 1/r tangential factor turns into a global accuracy
        floor; cubic stencils (with the origin ghost at the innermost face,
        see ``_m_face_reflect``) remove it.
        """
        n = self.n_r
        mat = np.zeros((n, n))
        c4 = np.array([-1.0, 9.0, 9.0, -1.0]) / 16.0
        mat[0, 0:3] = c4[1:]  # ghost partner in _m_face_reflect
        for f in range(1, n - 2):
            mat[f, f - 1:f + 3] = c4
        for f in (n - 2, n - 1):
            offs = self.r[n - 4:] - self.r_faces[f]
            mat[f, n - 4:] = _one_sided_weights(offs, 0)
        return mat

    @cached_property
    def _m_face_reflect(self):
        mat = np.zeros((self.n_r, self.n_r))
        mat[0, 0] = -1.0 / 16.0
        return mat

    def _face_average(self, f):
        fm = np.einsum("ab,...bt->...at", self._m_face, f)
        fm += np.einsum("ab,...bt->...at", self._m_face_reflect,
                        self._rotate_half(f))
        return fm

    def _face_average_t(self, z):
        out = np.einsum("ab,...bt->...at", self._m_face.T.copy(), z)
        out += self._rotate_half(
            np.einsum("ab,...bt->...at", self._m_face_reflect.T.copy(), z))
        return out

    def face_grad_scalar(self, f):
        """Cartesian gradient sampled on the radial faces."""
        fr = np.einsum("ab,...bt->...at", self._d_face, f)
        ft = self.ddtheta(self._face_average(f)) / self.r_faces[:, None]
        return np.stack([self.cos_t * fr - self.sin_t * ft,
                         self.sin_t * fr + self.cos_t * ft])

    def face_grad_scalar_t(self, g):
        a = self.cos_t * g[0] + self.sin_t * g[1]
        b = (-self.sin_t * g[0] + self.cos_t * g[1]) / self.r_faces[:, None]
        out = np.einsum("ab,...bt->...at", self._d_face.T.copy(), a)
        out += self._face_average_t(self.ddtheta_t(b))
        return out

    def face_grad_vector(self, w):
        return np.stack([self.face_grad_scalar(w[0]),
                         self.face_grad_scalar(w[1])])

    def face_grad_vector_t(self, t):
        return np.stack([self.face_grad_scalar_t(t[0]),
                         self.face_grad_scalar_t(t[1])])

    def faces_to_rings(self, qf):
        """Second-order interpolation of a face-sampled scalar to the rings."""
        out = np.empty_like(qf)
        out[..., 1:, :] = 0.5 * (qf[..., :-1, :] + qf[..., 1:, :])
        out[..., 0, :] = 1.5 * qf[..., 0, :] - 0.5 * qf[..., 1, :]
        return out

    def rings_to_faces(self, qc):
        """Interpolation of a ring-sampled scalar to the faces (cubic)."""
        return self._face_average(qc)

    # -- conservative cell divergence (pressure/continuity live on rings) ------

    def cell_divergence(self, w):
        """Flux-form divergence on the ring cells.

        Radial fluxes are interpolated normal velocities on the faces (the
        boundary-face row of the interpolation is the one-sided trace), and
        the cell at the origin closes the telescoping, so summing against the
        cell weights reproduces the boundary flux integral exactly (discrete
        Gauss identity).
        """
        w = np.asarray(w, dtype=float)
        ur_faces = (self.cos_t * self._face_average(w[0])
                    + self.sin_t * self._face_average(w[1]))
        flux = self.r_faces[:, None] * ur_faces
        div = np.empty((self.n_r, self.n_theta))
        div[0] = flux[0]
        div[1:] = flux[1:] - flux[:-1]
        div /= (self.r[:, None] * self.dr)
        ut = -self.sin_t * w[0] + self.cos_t * w[1]
        div += self.ddtheta(ut) / self.r[:, None]
        return div

    def cell_divergence_t(self, q):
        """Plain-dot transpose of :meth:`cell_divergence`."""
        q = np.asarray(q, dtype=float)
        s = q / (self.r[:, None] * self.dr)
        dflux = np.empty_like(s)
        dflux[:-1] = s[:-1] - s[1:]
        dflux[-1] = s[-1]
        dur = self.r_faces[:, None] * dflux
        out0 = self._face_average_t(self.cos_t * dur)
        out1 = self._face_average_t(self.sin_t * dur)
        dut = self.ddtheta_t(q / self.r[:, None])
        out0 += -self.sin_t * dut
        out1 += self.cos_t * dut
        return np.stack([out0, out1])

    def pressure_rows(self, q):
        """Mimetic (weight-scaled) pressure gradient in flux form.

        This is how a cell pressure enters the momentum flux balances: radial
        fluxes of q*Id on the faces with no flux through the boundary circle
        (the boundary traction carries the pressure there), tangential flux
        divergence on the rings.
        """
        q = np.asarray(q, dtype=float)
        q_f = self.rings_to_faces(q)
        flux = self.r_faces[:, None] * q_f
        out = np.zeros((2, self.n_r, self.n_theta))
        for c, trig in enumerate((self.cos_t, self.sin_t)):
            fr = trig * flux
            out[c, 0] = fr[0]
            out[c, 1:] = fr[1:] - fr[:-1]
            out[c, -1] = -fr[-2]
        out *= self.dtheta
        e_theta = (-self.sin_t, self.cos_t)
        for c in range(2):
            out[c] += self.dtheta * self.dr * self.ddtheta(e_theta[c] * q)
        return out

    def pressure_rows_t(self, x):
        """Plain-dot transpose of :meth:`pressure_rows`."""
        x = np.asarray(x, dtype=float)
        dur = np.zeros((self.n_r, self.n_theta))
        for c, trig in enumerate((self.cos_t, self.sin_t)):
            dfr = np.zeros((self.n_r, self.n_theta))
            dfr[:-1] = x[c, :-1]
            dfr[:-2] -= x[c, 1:-1]
            dfr[-2] -= x[c, -1]
            dur += trig * dfr
        out = self.dtheta * self._face_average_t(self.r_faces[:, None] * dur)
        e_theta = (-self.sin_t, self.cos_t)
        for c in range(2):
            out += self.dtheta * self.dr * e_theta[c] * self.ddtheta_t(x[c])
        return out

    # -- boundary ring --------------------------------------------------------

    def trace(self, f):
        """Extrapolated value at r = 1, shape (..., n_theta)."""
        w = self.trace_value_weights
        cols = f[..., self.n_r - _TRACE_POINTS:self.n_r, :]
        return np.einsum("m,...mt->...t", w, cols)

    def trace_t(self, b):
        w = self.trace_value_weights
        out = np.zeros(b.shape[:-1] + (self.n_r, self.n_theta))
        out[..., self.n_r - _TRACE_POINTS:self.n_r, :] = \
            w[:, None] * b[..., None, :]
        return out

    def trace_ddr(self, f):
        """One-sided radial derivative at r = 1."""
        w = self.trace_deriv_weights
        cols = f[..., self.n_r - _TRACE_POINTS:self.n_r, :]
        return np.einsum("m,...mt->...t", w, cols)

    # -- quadrature -----------------------------------------------------------

    def integrate(self, f):
        return float(np.sum(f * self.weights))

    def inner(self, f, g):
        return float(np.sum(f * g * self.weights))

    def norm_l2(self, f):
        return float(np.sqrt(np.sum(f * f * self.weights)))

    def flatten(self, field):
        return np.ascontiguousarray(field).reshape(field.shape[:-2] + (-1,))

    def unflatten(self, flat, ncomp=2):
        if ncomp == 0:
            return flat.reshape(self.n_r, self.n_theta)
        return flat.reshape((ncomp, self.n_r, self.n_theta))

    def same_layout(self, other):
        return self.n_r == other.n_r and self.n_theta == other.n_theta


@dataclass(frozen=True)
class AleMap:
    """Harmonic-extension map with its first derivatives and inverse data.

    ``grad_psi[c, j]`` holds the Cartesian derivative of map component ``c``
    in direction ``j``; ``inv_grad`` is the pointwise matrix inverse and
    ``jac`` the determinant.  The ``*_b`` attributes are exact boundary-ring
    traces from the modal expansion (the grid fields stop at the last
    staggered node).
    """

    grid: DiskGrid
    curve: object
    boundary_height: np.ndarray
    psi: np.ndarray
    grad_psi: np.ndarray
    jac: np.ndarray
    inv_grad: np.ndarray
    psi_b: np.ndarray
    grad_psi_b: np.ndarray
    jac_b: np.ndarray
    inv_grad_b: np.ndarray
    grad_psi_f: np.ndarray = None  # map tensors on the radial faces
    jac_f: np.ndarray = None
    inv_grad_f: np.ndarray = None

    @property
    def is_identity(self):
        return bool(np.all(self.boundary_height == 0.0))


def _invert_2x2(g):
    """Pointwise inverse and determinant of a (2, 2, ...) tensor field."""
    det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    inv = np.empty_like(g)
    inv[0, 0] = g[1, 1] / det
    inv[0, 1] = -g[0, 1] / det
    inv[1, 0] = -g[1, 0] / det
    inv[1, 1] = g[0, 0] / det
    return inv, det


def harmonic_extend(h_ee, curve, grid, jac_floor=1e-8):
    """Build the ALE map for boundary displacement ``h_ee`` along the normal.

    Each angular Fourier mode of the boundary data is lifted into the disk as
    ``r^|k|``, the exact harmonic extension; gradients follow by analytic
    differentiation of the modal expansion.
    """
    if curve.n_theta != grid.n_theta:
        raise GridMismatch("curve and disk grid have different angular counts")
    h_ee = np.asarray(h_ee, dtype=float)
    bdata = curve.X + h_ee * curve.N          # (2, n_theta)
    n = grid.n_theta
    coeff = np.fft.fft(bdata, axis=-1)        # (2, n)
    k = np.fft.fftfreq(n, d=1.0 / n)
    absk = np.abs(k)

    def assemble(radii):
        rr = np.asarray(radii)[:, None]
        lift = rr ** absk[None, :]
        dlift = np.zeros_like(lift)
        pos = absk > 0
        dlift[:, pos] = absk[pos] * rr ** (absk[pos] - 1.0)
        psi = np.fft.ifft(coeff[:, None, :] * lift[None], axis=-1).real
        dpsi_dr = np.fft.ifft(coeff[:, None, :] * dlift[None], axis=-1).real
        dpsi_dt = np.fft.ifft(coeff[:, None, :] * lift[None] * (1j * k), axis=-1).real
        cos_t, sin_t = grid.cos_t, grid.sin_t
        inv_r = 1.0 / rr
        gx = cos_t * dpsi_dr - sin_t * inv_r * dpsi_dt
        gy = sin_t * dpsi_dr + cos_t * inv_r * dpsi_dt
        grad = np.stack([gx, gy], axis=1)     # (2 comp, 2 dir, nr, n)
        return psi, grad

    psi, grad = assemble(grid.r)
    psi_b, grad_b = assemble(np.array([1.0]))
    psi_b, grad_b = psi_b[:, 0, :], grad_b[:, :, 0, :]
    _, grad_f = assemble(grid.r_faces)

    inv, det = _invert_2x2(grad)
    inv_b, det_b = _invert_2x2(grad_b)
    inv_f, det_f = _invert_2x2(grad_f)
    jmin = min(det.min(), det_b.min(), det_f.min())
    if jmin <= jac_floor:
        raise NotDiffeomorphism(
            f"harmonic extension is not a diffeomorphism: min J = {jmin:.3e}")
    return AleMap(grid=grid, curve=curve, boundary_height=h_ee.copy(),
                  psi=psi, grad_psi=grad, jac=det, inv_grad=inv,
                  psi_b=psi_b, grad_psi_b=grad_b, jac_b=det_b,
                  inv_grad_b=inv_b, grad_psi_f=grad_f, jac_f=det_f,
                  inv_grad_f=inv_f)


def identity_map(curve, grid):
    return harmonic_extend(np.zeros(curve.n_theta), curve, grid)


def scalar_harmonic_lift(g, grid, radii=None):
    """Harmonic extension of scalar boundary samples with analytic gradient.

    Returns ``(ext, grad)`` with ``ext`` of shape (n_radii, n_theta) and
    ``grad`` the exact Cartesian gradient of the modal expansion, shape
    (2, n_radii, n_theta).  Constant data lifts to the same constant with
    zero gradient, exactly.  ``radii`` defaults to the ring radii.
    """
    g = np.asarray(g, dtype=float)
    n = grid.n_theta
    coeff = np.fft.fft(g)
    k = np.fft.fftfreq(n, d=1.0 / n)
    absk = np.abs(k)
    rr = (grid.r if radii is None else np.asarray(radii))[:, None]
    lift = rr ** absk[None, :]
    dlift = np.zeros_like(lift)
    pos = absk > 0
    dlift[:, pos] = absk[pos] * rr ** (absk[pos] - 1.0)
    ext = np.fft.ifft(coeff[None, :] * lift, axis=-1).real
    d_r = np.fft.ifft(coeff[None, :] * dlift, axis=-1).real
    d_t = np.fft.ifft(coeff[None, :] * lift * (1j * k), axis=-1).real
    inv_r = 1.0 / rr
    grad = np.stack([grid.cos_t * d_r - grid.sin_t * inv_r * d_t,
                     grid.sin_t * d_r + grid.cos_t * inv_r * d_t])
    return ext, grad


def piola_residual(m, h_ee, curve):
    """Max mismatch of J A^T N against sqrt(g) (n o psi) on the boundary.

    J and A are extrapolated to the ring from their grid samples, so the
    residual reflects the radial discretization (it vanishes only for maps
    whose J, A are low-degree polynomials in r, e.g. uniform scalings).
    """
    grid = m.grid
    jac_b = grid.trace(m.jac)
    inv_b = grid.trace(m.inv_grad)
    lhs = jac_b * np.einsum("ikt,it->kt", inv_b, curve.N)
    rhs = np.sqrt(metric(h_ee, curve)) * unit_normal(h_ee, curve)
    return float(np.max(np.abs(lhs - rhs)))


def pushforward_w(v, m):
    """Divergence-free variable from the ALE velocity: w = J A v."""
    flat = m.grid.flatten
    out = _kernels.matvec22(flat(m.inv_grad), flat(np.asarray(v, dtype=float)))
    return m.grid.unflatten(out) * m.jac


def pullback_v(w, m):
    """ALE velocity from the divergence-free variable: v = J^-1 (grad psi) w."""
    flat = m.grid.flatten
    out = m.grid.unflatten(
        _kernels.matvec22(flat(m.grad_psi), flat(np.asarray(w, dtype=float))))
    return out / m.jac


def map_time_derivative(m_prev, m_curr, dt):
    """Backward-difference map velocity (psi_curr - psi_prev) / dt."""
    if not m_prev.grid.same_layout(m_curr.grid):
        raise GridMismatch("maps live on different grids")
    if dt <= 0:
        raise ValueError("dt must be positive")
    return (m_curr.psi - m_prev.psi) / dt
