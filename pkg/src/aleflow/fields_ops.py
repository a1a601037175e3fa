"""Transformed differential and boundary operators on the reference disk.

Everything is evaluated in Cartesian index form on the polar grid: the flux
tensor of the viscous term is a pointwise rank-4 contraction of the map
coefficients with the gradient of the pulled-back velocity, the traction is
its boundary-ring evaluation minus the pressure, and the forcing collects the
transport, map-rate and commutator groups of the momentum equation.
"""

import numpy as np

from . import _kernels
from .ale_map import pullback_v


def symmetric_gradient(w, grid):
    """Def w = grad w + (grad w)^T, shape (2, 2, n_r, n_theta)."""
    g = grid.grad_vector(np.asarray(w, dtype=float))
    return g + np.swapaxes(g, 0, 1)


def divergence(w, grid):
    """Cartesian divergence of a vector field."""
    return grid.divergence(np.asarray(w, dtype=float))


def operator_coefficients(m):
    """Pointwise tensors of the transformed viscous operator for one map.

    Returns ``(vmap, coeff)`` where ``vmap = J^-1 grad(psi)`` maps the
    divergence-free variable to the ALE velocity and ``coeff[s, k, i, j]``
    multiplies ``d v^i / d x_j`` in the flux component ``(s, k)``:

        coeff[s, k, i, j] = psi^i_{,s} (A A^T)[k, j] + A[k, i] delta[j, s]
    """
    gp, inv, jac = m.grad_psi, m.inv_grad, m.jac
    vmap = gp / jac
    aat = np.einsum("kln,jln->kjn", inv.reshape(2, 2, -1), inv.reshape(2, 2, -1))
    shape = gp.shape[2:]
    gpf = gp.reshape(2, 2, -1)
    coeff = np.einsum("isn,kjn->skijn", gpf, aat)
    eye = np.eye(2)
    coeff += np.einsum("kin,js->skijn", inv.reshape(2, 2, -1), eye)
    return vmap, np.ascontiguousarray(coeff.reshape(2, 2, 2, 2, *shape))


def boundary_operator_coefficients(m):
    """Boundary-ring version of :func:`operator_coefficients` (exact traces)."""
    gp, inv = m.grad_psi_b, m.inv_grad_b
    aat = np.einsum("kln,jln->kjn", inv, inv)
    coeff = np.einsum("isn,kjn->skijn", gp, aat)
    coeff += np.einsum("kin,js->skijn", inv, np.eye(2))
    return coeff


def operator_coefficients_faces(m):
    """Radial-face version of :func:`operator_coefficients` (exact samples)."""
    gp, inv = m.grad_psi_f, m.inv_grad_f
    shape = gp.shape[2:]
    gpf = gp.reshape(2, 2, -1)
    invf = inv.reshape(2, 2, -1)
    aat = np.einsum("kln,jln->kjn", invf, invf)
    coeff = np.einsum("isn,kjn->skijn", gpf, aat)
    coeff += np.einsum("kin,js->skijn", invf, np.eye(2))
    return np.ascontiguousarray(coeff.reshape(2, 2, 2, 2, *shape))


def flux_tensor(m, w):
    """T[s, k] pairing with d phi^s / d x_k in the weak viscous term."""
    grid = m.grid
    vmap, coeff = operator_coefficients(m)
    v = grid.unflatten(_kernels.matvec22(grid.flatten(vmap),
                                         grid.flatten(np.asarray(w, dtype=float))))
    g = grid.grad_vector(v)
    t = _kernels.contract44(_kernels.pack_coefficients(coeff),
                            grid.flatten(g))
    return t.reshape(2, 2, grid.n_r, grid.n_theta)


def viscous_operator(m, w):
    """Strong form of the transformed viscous term: out^s = d_k T^{sk}.

    Reduces to div(Def w) = Lap w + grad(div w) at the identity map.
    """
    grid = m.grid
    t = flux_tensor(m, w)
    out = np.empty((2, grid.n_r, grid.n_theta))
    for s in range(2):
        out[s] = grid.grad_scalar(t[s, 0])[0] + grid.grad_scalar(t[s, 1])[1]
    return out


def boundary_vector_gradient(v, grid):
    """Cartesian gradient of a vector field on the boundary ring.

    Traces are one-sided (quadratic extrapolation for values, second-order
    stencil for the radial derivative); the angular derivative is spectral.
    """
    v = np.asarray(v, dtype=float)
    v_b = grid.trace(v)
    v_r = grid.trace_ddr(v)
    v_t = grid.ddtheta(v_b)
    cos_t, sin_t = grid.cos_t, grid.sin_t
    gb = np.empty((2, 2, grid.n_theta))
    for i in range(2):
        gb[i, 0] = cos_t * v_r[i] - sin_t * v_t[i]
        gb[i, 1] = sin_t * v_r[i] + cos_t * v_t[i]
    return gb


def traction(m, w, q):
    """Transformed boundary stress contracted with the reference normal.

    At the identity map this is (Def w - q Id) N.  Shape (2, n_theta).
    """
    grid = m.grid
    v = pullback_v(np.asarray(w, dtype=float), m)
    gb = boundary_vector_gradient(v, grid)
    coeff_b = boundary_operator_coefficients(m)
    t_b = np.einsum("skijn,ijn->skn", coeff_b, gb)
    q_b = grid.trace(np.asarray(q, dtype=float))
    normal = m.curve.N
    out = np.einsum("skn,kn->sn", t_b, normal) - q_b * normal
    return out


def forcing(m, psi_t, w, jinv_grad_psi_rate=None):
    """Right-hand side of the transformed momentum equation.

    Collects the three groups: transport by the ALE-relative velocity, the
    map-rate term (``jinv_grad_psi_rate`` is the backward-differenced time
    derivative of J^-1 grad(psi); zero when omitted), and the commutator of
    the map coefficients with the viscous flux.  ``psi_t`` is the map
    velocity field (zero for a stationary map).
    """
    grid = m.grid
    w = np.asarray(w, dtype=float)
    gp, inv = m.grad_psi, m.inv_grad
    flat = grid.flatten
    v = pullback_v(w, m)
    g = grid.grad_vector(v)

    # transport: -psi^i_{,s} [A (v - psi_t)]^j v^i_{,j}
    rel = v - np.asarray(psi_t, dtype=float)
    adv = grid.unflatten(_kernels.matvec22(flat(inv), flat(rel)))
    conv = np.einsum("ijab,jab->iab", g, adv)
    out = -grid.unflatten(_kernels.mattvec22(flat(gp), flat(conv)))

    # map-rate: -psi^i_{,s} (J^-1 psi^i_{,r})_t w^r
    if jinv_grad_psi_rate is not None:
        rate_w = grid.unflatten(
            _kernels.matvec22(flat(np.asarray(jinv_grad_psi_rate, dtype=float)),
                              flat(w)))
        out -= grid.unflatten(_kernels.mattvec22(flat(gp), flat(rate_w)))

    # commutator: (psi^i_{,s} A^k_l)_{,k} [A^j_l v^i_{,j} + A^j_i v^l_{,j}]
    g_ainv = np.einsum("ijab,jlab->ilab", g, inv)
    sym = g_ainv + np.swapaxes(g_ainv, 0, 1)
    for s in range(2):
        acc = np.zeros((grid.n_r, grid.n_theta))
        for i in range(2):
            for ell in range(2):
                prod0 = gp[i, s] * inv[0, ell]
                prod1 = gp[i, s] * inv[1, ell]
                div_p = grid.grad_scalar(prod0)[0] + grid.grad_scalar(prod1)[1]
                acc += div_p * sym[i, ell]
        out[s] += acc
    return out


def bilinear_form(m, w, phi):
    """Weak pairing of the transformed viscous flux of w against grad(phi)."""
    grid = m.grid
    t = flux_tensor(m, w)
    gphi = grid.grad_vector(np.asarray(phi, dtype=float))
    return float(np.sum(t * gphi * grid.weights))
