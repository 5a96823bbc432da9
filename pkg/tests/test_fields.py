"""
Tests for Discrete Fields

Grid densities, sinograms, interpolation, quadrature, phantoms and the plain-text
file formats.
"""

import math

import numpy as np
import pytest

from src.funk_engine.errors import (
    DimensionMismatchError,
    FunkValidationError,
    MalformedHeaderError,
    NonFiniteValueError,
    ShapeMismatchError,
    SupportViolationError,
)
from src.funk_engine.fields import (
    GridDensity,
    PhantomSpec,
    Sinogram,
    ball_mask,
    cell_centers,
    half_ball_mask,
    inner_product_Sigma,
    inner_product_X,
    lambda_support,
    make_phantom,
    named_mask,
    read_grid,
    read_sinogram,
    sample,
    write_grid,
    write_sinogram,
)
from src.funk_engine.geometry import ScanGeometry


class TestGrid:
    def test_cell_centers(self):
        xs, ys = cell_centers(4, 2)
        np.testing.assert_allclose(xs, [-0.75, -0.25, 0.25, 0.75])
        np.testing.assert_allclose(ys, [-0.5, 0.5])

    def test_masks(self):
        ball = ball_mask(32, 32)
        half = half_ball_mask(32, 32)
        assert ball.shape == (32, 32)
        assert not ball[0, 0]
        assert ball[16, 16]
        assert np.all(ball[half])
        assert half.sum() == ball.sum() // 2

    def test_named_mask(self):
        assert named_mask(None, 8, 8) is None
        np.testing.assert_array_equal(named_mask("ball", 8, 8), ball_mask(8, 8))
        with pytest.raises(FunkValidationError):
            named_mask("square", 8, 8)

    def test_values_are_read_only(self, disk_phantom):
        with pytest.raises(ValueError):
            disk_phantom.values[0, 0] = 1.0

    def test_rejects_non_finite(self):
        values = np.zeros((4, 4))
        values[1, 2] = np.nan
        with pytest.raises(NonFiniteValueError):
            GridDensity(values)

    def test_rejects_mass_off_mask(self):
        mask = half_ball_mask(8, 8)
        values = np.zeros((8, 8))
        values[4, 1] = 1.0
        with pytest.raises(SupportViolationError):
            GridDensity(values, mask)

    def test_with_values_zeroes_off_mask(self):
        mask = half_ball_mask(8, 8)
        f = GridDensity.zeros(8, 8, mask).with_values(np.ones((8, 8)))
        assert np.all(f.values[~mask] == 0.0)
        assert np.all(f.values[mask] == 1.0)

    def test_rejects_bad_shape(self):
        with pytest.raises(ShapeMismatchError):
            GridDensity(np.zeros(5))


class TestInterpolation:
    def test_exact_at_cell_centres(self, smooth_phantom):
        xs, ys = cell_centers(32, 32)
        for iy, ix in [(16, 16), (10, 20), (20, 9)]:
            assert sample(smooth_phantom, (xs[ix], ys[iy])) == pytest.approx(smooth_phantom.values[iy, ix])

    def test_reproduces_linear_functions(self):
        xs, ys = cell_centers(16, 16)
        gx, gy = np.meshgrid(xs, ys, indexing="xy")
        f = GridDensity(2.0 * gx - 0.5 * gy + 0.25)
        for point in [(0.1, 0.2), (-0.33, 0.41), (0.0, -0.6)]:
            assert sample(f, point) == pytest.approx(2.0 * point[0] - 0.5 * point[1] + 0.25)

    def test_zero_outside_ball(self):
        f = GridDensity(np.ones((16, 16)))
        assert sample(f, (0.8, 0.8)) == 0.0
        assert sample(f, (3.0, 0.0)) == 0.0


class TestInnerProducts:
    def test_grid_inner_product(self):
        f = GridDensity(np.ones((10, 20)))
        assert inner_product_X(f, f) == pytest.approx(4.0)

    def test_grid_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            inner_product_X(GridDensity.zeros(4, 4), GridDensity.zeros(4, 5))

    def test_sinogram_inner_product(self, full_geom):
        ones = Sinogram(full_geom, np.ones(full_geom.shape))
        expected = 2 * math.pi * full_geom.detector_radius * (full_geom.r_max - full_geom.r_min)
        assert inner_product_Sigma(ones, ones) == pytest.approx(expected)

    def test_sinogram_geometry_mismatch(self, full_geom, partial_geom):
        with pytest.raises(ShapeMismatchError):
            inner_product_Sigma(Sinogram.zeros(full_geom), Sinogram.zeros(partial_geom))

    def test_sinogram_shape_checked(self, full_geom):
        with pytest.raises(ShapeMismatchError):
            Sinogram(full_geom, np.zeros((3, 3)))


class TestLambdaSupport:
    def test_ball_covers_default_window(self, full_geom):
        assert lambda_support(full_geom).all()

    def test_half_ball_excludes_near_radii_on_far_side(self):
        geom = ScanGeometry(detector_radius=1.5, n_detectors=8, n_radii=21)
        support = lambda_support(geom, half_ball_mask(32, 32))
        # detector 4 sits at t = π, at least 1.5 away from the half ball
        assert not support[4, 0]
        assert support[0, 0]


class TestPhantoms:
    def test_parse(self):
        spec = PhantomSpec.parse("disk:0,0,0.5;gauss:0.2,0.1,0.1,2")
        assert [p.kind for p in spec.primitives] == ["disk", "gaussian"]
        assert spec.primitives[0].amplitude == 1.0
        assert spec.primitives[1].amplitude == 2.0

    @pytest.mark.parametrize("text", ["disk:0,0", "blob:0,0,0.1", "disk:a,0,0.1"])
    def test_parse_errors(self, text):
        with pytest.raises(FunkValidationError):
            PhantomSpec.parse(text)

    def test_leaking_primitive_rejected(self):
        with pytest.raises(SupportViolationError):
            make_phantom(PhantomSpec.parse("disk:0.8,0,0.3"), 16, 16)

    def test_disk_values(self, disk_phantom):
        assert disk_phantom.values[16, 16] == 1.0
        assert disk_phantom.values[16, 2] == 0.0

    def test_random_is_seeded(self):
        a = make_phantom(PhantomSpec.random(3, seed=11), 24, 24)
        b = make_phantom(PhantomSpec.random(3, seed=11), 24, 24)
        c = make_phantom(PhantomSpec.random(3, seed=12), 24, 24)
        np.testing.assert_array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_masked_phantom(self):
        f = make_phantom(PhantomSpec.parse("disk:0,0,0.6", mask="half-ball"), 32, 32)
        mask = half_ball_mask(32, 32)
        np.testing.assert_array_equal(f.support_mask, mask)
        assert np.all(f.values[~mask] == 0.0)
        assert f.values[mask].sum() > 0.0


class TestFileFormats:
    def test_grid_round_trip_is_exact(self, tmp_path, smooth_phantom):
        path = tmp_path / "phantom.grid"
        write_grid(smooth_phantom, path)
        assert path.read_text().splitlines()[0] == "funkgrid 2 32 32 -1 1 -1 1"
        back = read_grid(path)
        np.testing.assert_array_equal(back.values, smooth_phantom.values)

    def test_grid_bad_header(self, tmp_path):
        path = tmp_path / "bad.grid"
        path.write_text("grid 2 2 2 -1 1 -1 1\n0 0\n0 0\n")
        with pytest.raises(MalformedHeaderError):
            read_grid(path)

    def test_grid_wrong_row_count(self, tmp_path):
        path = tmp_path / "short.grid"
        path.write_text("funkgrid 2 2 3 -1 1 -1 1\n0 0\n0 0\n")
        with pytest.raises(DimensionMismatchError):
            read_grid(path)

    def test_grid_non_finite(self, tmp_path):
        path = tmp_path / "nan.grid"
        path.write_text("funkgrid 2 2 2 -1 1 -1 1\n0 nan\n0 0\n")
        with pytest.raises(NonFiniteValueError):
            read_grid(path)

    def test_sinogram_round_trip(self, tmp_path, partial_geom):
        rng = np.random.default_rng(0)
        g = Sinogram(partial_geom, rng.standard_normal(partial_geom.shape))
        path = tmp_path / "data.sino"
        write_sinogram(g, path)
        back = read_sinogram(path)
        assert back.geom == partial_geom
        np.testing.assert_array_equal(back.values, g.values)

    def test_full_scan_header(self, tmp_path, full_geom):
        path = tmp_path / "full.sino"
        write_sinogram(Sinogram.zeros(full_geom), path)
        assert path.read_text().splitlines()[0].endswith(" full")
        assert read_sinogram(path).geom.is_full

    def test_sinogram_bad_geometry(self, tmp_path):
        path = tmp_path / "bad.sino"
        path.write_text("funksino 2 2 1.5 2.0 1.0 full\n0 0\n0 0\n")
        with pytest.raises(MalformedHeaderError):
            read_sinogram(path)
