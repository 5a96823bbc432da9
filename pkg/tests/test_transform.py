"""
Tests for the Funk Transform

Analytic forward oracle, support and rotation covariance, the M ↔ −M° duality,
backprojection, the normal kernel singularity and the eigenvalue decay probe.
"""

import math

import numpy as np
import pytest

from src.funk_engine.config import reset_config
from src.funk_engine.errors import (
    DegenerateInputError,
    FunkValidationError,
    GeometryMismatchError,
    TooLargeError,
)
from src.funk_engine.fields import (
    GridDensity,
    PhantomSpec,
    Sinogram,
    ball_mask,
    inner_product_Sigma,
    inner_product_X,
    make_phantom,
)
from src.funk_engine.geometry import ScanGeometry
from src.funk_engine.transform import (
    FunkOperator,
    adjoint_residual,
    backproject,
    circle_points,
    dual,
    forward,
    get_operator,
    kernel_probe,
    normal_kernel,
    spectrum_probe,
)


def rotate_quarter(values):
    """Values of f(R⁻¹x) for a counter-clockwise quarter turn R."""
    return values[::-1, :].T


def disk_arc_length(r, d=1.5, a=0.5):
    """Length of the circle |x − (d, 0)| = r inside the disk |x| ≤ a."""
    c = (d ** 2 + r ** 2 - a ** 2) / (2.0 * d * r)
    if c >= 1.0:
        return 0.0
    if c <= -1.0:
        return 2.0 * math.pi * r
    return 2.0 * r * math.acos(c)


def smooth_weight(geom, kind="density"):
    t = geom.detector_angles()[:, None]
    r = geom.radii()[None, :]
    return Sinogram(geom, np.cos(t) * np.exp(-4.0 * (r - 1.5) ** 2) + 0.5, kind)


class TestCirclePoints:
    def test_minimum_and_growth(self):
        assert circle_points(0.01, 0.1) == 64
        assert circle_points(1.0, 2.0 / 256) == math.ceil(4 * 2 * math.pi * 128)


class TestForward:
    def test_disk_matches_arc_length(self):
        geom = ScanGeometry(detector_radius=1.5, n_detectors=4, r_min=1.3, r_max=1.7, n_radii=9)
        disk = make_phantom(PhantomSpec.parse("disk:0,0,0.5,1"), 256, 256)
        image = forward(disk, geom)
        expected = np.array([disk_arc_length(r) for r in geom.radii()])
        for row in image.values:
            np.testing.assert_allclose(row, expected, rtol=0.015)
        assert disk_arc_length(1.5) == pytest.approx(2 * 1.5 * math.acos(4.25 / 4.5))

    def test_vanishes_outside_annulus(self, smooth_phantom):
        geom = ScanGeometry(detector_radius=1.5, n_detectors=16, r_min=0.1, r_max=2.9, n_radii=57)
        image = forward(smooth_phantom, geom)
        radii = geom.radii()
        outside = (radii <= 0.5) | (radii >= 2.5)
        assert np.all(np.abs(image.values[:, outside]) <= 1e-12)
        assert np.abs(image.values[:, ~outside]).max() > 0.0

    def test_quarter_turn_shifts_detectors(self, smooth_phantom, full_geom):
        image = forward(smooth_phantom, full_geom)
        rotated = forward(GridDensity(rotate_quarter(smooth_phantom.values)), full_geom)
        shifted = np.roll(image.values, full_geom.n_detectors // 4, axis=0)
        scale = np.abs(image.values).max()
        np.testing.assert_allclose(rotated.values, shifted, rtol=1e-6, atol=1e-9 * scale)

    def test_operator_cache_reuses_assembly(self, full_geom):
        a = get_operator(full_geom, 16, 16)
        b = get_operator(full_geom, 16, 16)
        c = get_operator(full_geom, 16, 16, ball_mask(16, 16) & (np.arange(16)[None, :] >= 8))
        assert a is b
        assert c is not a

    def test_threaded_assembly_is_identical(self, full_geom):
        serial = FunkOperator(full_geom, 16, 16, threads=1)
        threaded = FunkOperator(full_geom, 16, 16, threads=4)
        assert (serial.matrix != threaded.matrix).nnz == 0

    def test_columns_restricted_to_ball(self, full_geom):
        op = FunkOperator(full_geom, 16, 16)
        outside = np.flatnonzero(~ball_mask(16, 16).ravel())
        assert op.matrix[:, outside].nnz == 0

    def test_grid_mismatch(self, full_geom):
        op = get_operator(full_geom, 16, 16)
        with pytest.raises(GeometryMismatchError):
            op.apply(GridDensity.zeros(8, 8))

    def test_discrete_adjoint_is_exact_transpose(self, partial_geom, smooth_phantom):
        op = get_operator(partial_geom, 32, 32)
        u = smooth_weight(partial_geom, "function")
        lhs = float(np.sum(op.energy_weights * op.forward_values(smooth_phantom.values).ravel() * u.values.ravel()))
        rhs = inner_product_X(smooth_phantom, op.adjoint(u))
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestDuality:
    def test_disk_against_constant(self):
        geom = ScanGeometry(detector_radius=1.5, n_detectors=64, n_radii=64)
        disk = make_phantom(PhantomSpec.parse("disk:0,0,0.5,1"), 64, 64)
        ones = Sinogram(geom, np.ones(geom.shape), "density")
        assert inner_product_Sigma(forward(disk, geom), ones.as_kind("function")) == pytest.approx(
            0.75 * math.pi ** 2, rel=0.02
        )
        assert adjoint_residual(disk, ones, geom) <= 1e-2

    def test_dual_of_constant(self):
        geom = ScanGeometry(detector_radius=1.5, n_detectors=64, n_radii=64)
        result = dual(Sinogram(geom, np.ones(geom.shape), "density"), geom, 32, 32)
        inside = ball_mask(32, 32)
        np.testing.assert_allclose(result.values[inside], -2 * math.pi * 1.5)
        assert np.all(result.values[~inside] == 0.0)

    def test_smooth_pair(self):
        geom = ScanGeometry(detector_radius=1.5, n_detectors=90, n_radii=80)
        f = make_phantom(PhantomSpec.parse("gauss:0.2,-0.1,0.2,1;gauss:-0.3,0.3,0.12,0.7"), 64, 64)
        assert adjoint_residual(f, smooth_weight(geom), geom) <= 2e-2

    def test_dual_requires_density(self, full_geom):
        with pytest.raises(FunkValidationError):
            dual(Sinogram.zeros(full_geom, "function"), full_geom, 8, 8)

    def test_geometry_mismatch(self, full_geom, partial_geom):
        with pytest.raises(GeometryMismatchError):
            dual(Sinogram.zeros(full_geom, "density"), partial_geom, 8, 8)


class TestBackproject:
    def test_constant_on_partial_scan(self, partial_geom):
        result = backproject(Sinogram(partial_geom, np.ones(partial_geom.shape)), partial_geom, 32, 32)
        assert np.abs(result.values).max() < 2 * math.pi * partial_geom.detector_radius
        assert np.all(result.values[ball_mask(32, 32)] < 0.0)

    def test_radially_symmetric_for_disk(self, full_geom, disk_phantom):
        result = backproject(forward(disk_phantom, full_geom), full_geom, 32, 32)
        scale = np.abs(result.values).max()
        np.testing.assert_allclose(rotate_quarter(result.values), result.values, rtol=1e-3, atol=1e-3 * scale)

    def test_requires_function(self, full_geom):
        with pytest.raises(FunkValidationError):
            backproject(Sinogram.zeros(full_geom, "density"), full_geom, 8, 8)


class TestNormalKernel:
    def test_mirror_pair(self, full_geom):
        value = normal_kernel((0.3, 0.1), (0.3, -0.1), full_geom)
        assert 0.0 < value < math.inf

    def test_symmetric(self, full_geom):
        assert normal_kernel((0.1, 0.2), (-0.4, 0.3), full_geom) == pytest.approx(
            normal_kernel((-0.4, 0.3), (0.1, 0.2), full_geom)
        )

    def test_inverse_distance_singularity(self, full_geom):
        y0 = np.array([0.2, -0.1])
        products = [normal_kernel(y0 + d * np.array([1.0, 0.0]), y0, full_geom) * d for d in (1e-2, 5e-3, 2.5e-3)]
        assert max(products) / min(products) < 1.1

    def test_cutoff_removes_shadowed_surfaces(self, partial_geom):
        assert normal_kernel((-0.9, 0.0), (-0.89, 0.0), partial_geom) == 0.0

    def test_coincident_points(self, full_geom):
        with pytest.raises(DegenerateInputError):
            normal_kernel((0.1, 0.1), (0.1, 0.1), full_geom)

    @pytest.mark.parametrize("y0", [(0.0, 0.0), (0.3, 0.2), (-0.5, 0.1), (0.1, -0.6), (0.6, 0.4)])
    def test_probe_slope(self, full_geom, y0):
        report = kernel_probe(y0, (1.0, 0.0), np.geomspace(1e-3, 1e-2, 5), full_geom)
        assert report.slope == pytest.approx(-1.0, abs=0.1)
        assert report.to_table().startswith("# distance kernel\n")

    def test_probe_rejects_zero_direction(self, full_geom):
        with pytest.raises(FunkValidationError):
            kernel_probe((0.0, 0.0), (0.0, 0.0), [1e-3, 1e-2], full_geom)


class TestSpectrum:
    def test_decay_rate(self):
        report = spectrum_probe(ScanGeometry(detector_radius=1.5), 24, 24, ball_mask(24, 24))
        assert -0.75 <= report.slope <= -0.25
        eigenvalues = np.array(report.eigenvalues)
        assert np.all(np.diff(eigenvalues) <= 0.0)
        assert eigenvalues.min() >= -1e-10 * eigenvalues[0]
        assert report.cells == int(ball_mask(24, 24).sum())

    def test_largest_eigenvalue_stable_under_detector_refinement(self):
        coarse = spectrum_probe(ScanGeometry(detector_radius=1.5, n_detectors=90), 16, 16)
        fine = spectrum_probe(ScanGeometry(detector_radius=1.5, n_detectors=180), 16, 16)
        assert fine.eigenvalues[0] == pytest.approx(coarse.eigenvalues[0], rel=0.05)

    def test_too_large(self, monkeypatch):
        monkeypatch.setenv("FUNKRAD_SPECTRUM_MAX_CELLS", "10")
        reset_config()
        with pytest.raises(TooLargeError):
            spectrum_probe(ScanGeometry(detector_radius=1.5, n_detectors=8, n_radii=8), 16, 16)

    def test_bad_window(self):
        with pytest.raises(FunkValidationError):
            spectrum_probe(ScanGeometry(detector_radius=1.5, n_detectors=8, n_radii=8), 8, 8, k_window=(5, 5))
