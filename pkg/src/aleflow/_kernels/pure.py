"""Pure-numpy implementations of the hot pointwise kernels.

Shapes follow the field convention used across the package: leading component
axes, trailing grid axes flattened to a single node axis of length ``n``.
"""

import numpy as np

BACKEND = "pure"


def pack_coefficients(coeff):
    """Backend-preferred storage of a (2,2,2,2,...) coefficient field.

    numpy's contraction runs fastest on the component-major layout (each of
    the sixteen coefficient planes is one contiguous vector).
    """
    return np.ascontiguousarray(np.asarray(coeff).reshape(2, 2, 2, 2, -1))


def contract44(coeff, grad):
    """out[s, k, n] = sum_ij coeff[s, k, i, j, n] * grad[i, j, n].

    ``coeff`` must come from :func:`pack_coefficients` of this backend.
    """
    return np.einsum("skijn,ijn->skn", coeff, grad)


def matvec22(mat, vec):
    """out[i, n] = sum_j mat[i, j, n] * vec[j, n]."""
    return np.einsum("ijn,jn->in", mat, vec)


def mattvec22(mat, vec):
    """Transpose apply: out[j, n] = sum_i mat[i, j, n] * vec[i, n]."""
    return np.einsum("ijn,in->jn", mat, vec)
