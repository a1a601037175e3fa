"""Hot-path kernels: compiled Cython core with a numpy fallback.

The compiled module is selected at import time when available; setting the
environment variable ``ALEFLOW_PURE=1`` forces the numpy implementation.
Both expose the same functions and produce identical results.
"""

import os

from . import pure as _pure

if os.environ.get("ALEFLOW_PURE", "") == "1":
    _impl = _pure
else:
    try:
        from . import _speedups as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _pure

BACKEND = _impl.BACKEND
pack_coefficients = _impl.pack_coefficients
contract44 = _impl.contract44
matvec22 = _impl.matvec22
mattvec22 = _impl.mattvec22


def backend_name():
    """Name of the kernel implementation in use ('compiled' or 'pure')."""
    return BACKEND
