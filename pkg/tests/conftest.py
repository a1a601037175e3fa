import numpy as np
import pytest

from aleflow.ale_map import DiskGrid
from aleflow.geometry import ReferenceCurve


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def circle256():
    return ReferenceCurve.unit_circle(256)


@pytest.fixture
def circle96():
    return ReferenceCurve.unit_circle(96)


@pytest.fixture
def grid_small():
    return DiskGrid(16, 64)


@pytest.fixture
def grid_medium():
    return DiskGrid(24, 96)


def random_band_limited(rng, n, max_mode=10, amplitude=1.0, zero_mean=False):
    """Smooth periodic samples with spectrum confined to low modes."""
    coeffs = np.zeros(n // 2 + 1, dtype=complex)
    m = min(max_mode, n // 2 - 1)
    coeffs[1:m + 1] = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    if not zero_mean:
        coeffs[0] = rng.standard_normal()
    f = np.fft.irfft(coeffs, n=n)
    peak = np.max(np.abs(f))
    return f * (amplitude / peak) if peak > 0 else f


def smooth_vector_field(rng, grid, max_mode=4, degree=3):
    """Random smooth Cartesian vector field (low-order polynomial mix)."""
    x, y = grid.xy
    basis = [np.ones_like(x), x, y, x * y, x**2 - y**2, x**2 * y,
             np.sin(x) * np.cos(y), np.cos(2 * y) * x]
    out = np.zeros((2, grid.n_r, grid.n_theta))
    for c in range(2):
        coeff = rng.standard_normal(len(basis))
        for a, b in zip(coeff, basis):
            out[c] += a * b
    return out
