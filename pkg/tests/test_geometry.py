import numpy as np
import pytest

from aleflow.errors import AdmissibilityViolation
from aleflow.geometry import (ReferenceCurve, arc_derivative, curvature,
                              enclosed_area, interface_length,
                              laplace_beltrami, metric, regularized_curvature,
                              sobolev_norm, unit_normal)
from aleflow.smoothing import double_mollify

from conftest import random_band_limited


def parametric_curvature(h, curve):
    """Independent oracle: curvature of the sampled curve X + h N via the
    parametric formula, oriented so the unit circle gives -1."""
    gamma = curve.X + h * curve.N
    gp = curve.derivative(gamma)
    gpp = curve.derivative(gamma, 2)
    num = gp[0] * gpp[1] - gp[1] * gpp[0]
    return -num / (gp[0]**2 + gp[1]**2) ** 1.5


class TestArcDerivative:
    def test_constant(self, circle256):
        out = arc_derivative(np.full(256, 3.7), circle256)
        assert np.max(np.abs(out)) < 1e-13

    def test_sin_2s(self, circle256):
        s = circle256.s
        out = arc_derivative(np.sin(2 * s), circle256)
        assert np.max(np.abs(out - 2 * np.cos(2 * s))) <= 1e-12

    def test_second_order(self):
        # FFT roundoff scales with k_max^2, so use a moderate grid
        curve = ReferenceCurve.unit_circle(128)
        out = arc_derivative(np.cos(curve.s), curve, order=2)
        assert np.max(np.abs(out + np.cos(curve.s))) <= 1e-12

    def test_order_validation(self, circle256):
        with pytest.raises(ValueError):
            arc_derivative(np.zeros(256), circle256, order=4)


class TestMetric:
    def test_zero_height(self, circle256):
        assert np.max(np.abs(metric(np.zeros(256), circle256) - 1.0)) < 1e-14

    def test_constant_height(self, circle256):
        c = 0.3
        g = metric(np.full(256, c), circle256)
        assert np.max(np.abs(g - (1 + c)**2)) < 1e-13

    def test_against_parametrization_speed(self, circle256):
        h = 0.1 * np.cos(3 * circle256.s)
        gamma = circle256.X + h * circle256.N
        dgamma = circle256.derivative(gamma)
        speed2 = dgamma[0]**2 + dgamma[1]**2
        g = metric(h, circle256)
        assert np.max(np.abs(g - speed2)) <= 1e-10

    def test_admissibility(self, circle256):
        with pytest.raises(AdmissibilityViolation):
            metric(np.full(256, -1.0), circle256)


class TestUnitNormal:
    def test_zero_height(self, circle256):
        n = unit_normal(np.zeros(256), circle256)
        assert np.max(np.abs(n - circle256.N)) < 1e-14

    def test_constant_height_radial(self, circle256):
        n = unit_normal(np.full(256, 0.2), circle256)
        assert np.max(np.abs(n - circle256.N)) < 1e-13

    def test_unit_length(self, rng, circle256):
        h = random_band_limited(rng, 256, amplitude=0.2)
        n = unit_normal(h, circle256)
        assert np.max(np.abs(np.hypot(*n) - 1.0)) <= 1e-13

    def test_metric_normal_consistency(self, rng, circle256):
        # sqrt(g) n reconstructs -h' X' + (1 + b0 h) N exactly
        h = random_band_limited(rng, 256, amplitude=0.15)
        hp = circle256.derivative(h)
        raw = -hp * circle256.tangent + (1 + circle256.b0 * h) * circle256.N
        rebuilt = np.sqrt(metric(h, circle256)) * unit_normal(h, circle256)
        assert np.max(np.abs(rebuilt - raw)) <= 1e-13


class TestCurvature:
    def test_circle(self, circle256):
        out = curvature(np.zeros(256), circle256)
        assert np.max(np.abs(out + 1.0)) < 1e-14

    def test_scaled_circle(self, circle256):
        c = 0.4
        out = curvature(np.full(256, c), circle256)
        assert np.max(np.abs(out + 1.0 / (1 + c))) <= 1e-10

    def test_mode_two(self, circle256):
        h = 0.1 * np.cos(2 * circle256.s)
        out = curvature(h, circle256)
        oracle = parametric_curvature(h, circle256)
        assert np.max(np.abs(out - oracle)) <= 1e-8

    def test_random_heights_against_oracle(self, rng, circle256):
        worst = 0.0
        for _ in range(50):
            h = random_band_limited(rng, 256, max_mode=12, amplitude=0.2)
            err = np.max(np.abs(curvature(h, circle256)
                                - parametric_curvature(h, circle256)))
            worst = max(worst, err)
        assert worst <= 1e-7


class TestRegularizedCurvature:
    def test_zero_height(self, circle256):
        z = np.zeros(256)
        out = regularized_curvature(z, z, circle256)
        assert np.max(np.abs(out + circle256.b0)) < 1e-14

    def test_collapses_to_curvature(self, rng, circle256):
        h = random_band_limited(rng, 256, amplitude=0.15)
        out = regularized_curvature(h, h, circle256)
        assert np.max(np.abs(out - curvature(h, circle256))) <= 1e-12

    def test_mollifier_consistency_sweep(self, circle256):
        h = 0.05 * np.cos(3 * circle256.s)
        base = curvature(h, circle256)
        prev = None
        for eps in (0.4, 0.2, 0.1):
            h_ee = double_mollify(h, eps, circle256)
            diff = np.max(np.abs(
                regularized_curvature(h, h_ee, circle256) - base))
            # difference shrinks with the smoothing length, roughly linearly
            assert diff / eps < 2.0 * np.max(np.abs(h)) * 40
            if prev is not None:
                assert diff < prev
            prev = diff


class TestLaplaceBeltrami:
    def test_constant(self, circle256):
        assert np.max(np.abs(laplace_beltrami(np.full(256, 2.0), circle256))) < 1e-13

    def test_single_mode(self, circle256):
        s = circle256.s
        out = laplace_beltrami(np.cos(4 * s), circle256)
        assert np.max(np.abs(out + 16 * np.cos(4 * s))) <= 1e-11

    def test_zero_mean(self, rng, circle256):
        f = random_band_limited(rng, 256)
        out = laplace_beltrami(f, circle256)
        assert abs(np.mean(out)) <= 1e-13


class TestEnclosedArea:
    def test_unit_disk(self, circle256):
        assert abs(enclosed_area(np.zeros(256), circle256) - np.pi) <= 1e-12

    def test_scaled_disk(self, circle256):
        c = 0.25
        area = enclosed_area(np.full(256, c), circle256)
        assert abs(area - np.pi * (1 + c)**2) <= 1e-12

    def test_against_polygon_oracle(self, circle256):
        from aleflow.geometry import resample
        a, k = 0.1, 3
        h = a * np.cos(k * circle256.s)
        area = enclosed_area(h, circle256)
        # dense polygon (shoelace on a refined band-limited resampling)
        n_f = 1 << 17
        s_f = np.arange(n_f) * 2 * np.pi / n_f
        h_f = a * np.cos(k * s_f)
        gx = (1 + h_f) * np.cos(s_f)
        gy = (1 + h_f) * np.sin(s_f)
        poly = 0.5 * np.sum(gx * np.roll(gy, -1) - gy * np.roll(gx, -1))
        assert abs(area - poly) <= 1e-8

    def test_resolution_invariance(self):
        a, k = 0.08, 4
        vals = []
        for n in (128, 256):
            curve = ReferenceCurve.unit_circle(n)
            vals.append(enclosed_area(a * np.cos(k * curve.s), curve))
        assert abs(vals[0] - vals[1]) <= 1e-10


class TestSobolevNorm:
    def test_constant(self):
        for s in (0.0, 1.0, 1.7, 2.0):
            assert abs(sobolev_norm(np.ones(128), s) - 1.0) <= 1e-13

    def test_single_mode_ratio(self, circle256):
        k = 3
        f = np.cos(k * circle256.s)
        n0 = sobolev_norm(f, 0.0)
        n1 = sobolev_norm(f, 1.0)
        assert abs(n0 - np.sqrt(0.5)) <= 1e-12
        assert abs(n1 / n0 - np.sqrt(1 + k**2)) <= 1e-12

    def test_parseval(self, rng):
        f = random_band_limited(rng, 256)
        assert abs(sobolev_norm(f, 0.0)
                   - np.sqrt(np.mean(f**2))) <= 1e-12


class TestShiftEquivariance:
    @pytest.mark.parametrize("shift", [1, 17, 100])
    def test_operations_commute_with_rotation(self, rng, circle256, shift):
        h = random_band_limited(rng, 256, amplitude=0.15)
        rolled = np.roll(h, shift)
        for op in (metric, curvature):
            assert np.max(np.abs(op(rolled, circle256)
                                 - np.roll(op(h, circle256), shift))) < 1e-9
        n1 = unit_normal(rolled, circle256)
        # the normal components rotate with the frame; compare invariantly
        assert abs(interface_length(rolled, circle256)
                   - interface_length(h, circle256)) < 1e-10
        assert abs(enclosed_area(rolled, circle256)
                   - enclosed_area(h, circle256)) < 1e-10
        assert n1.shape == (2, 256)
