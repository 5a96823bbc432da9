"""
Tests for Incidence Geometry and Scan Configurations

Finite-difference checks of the spherical incidence function, the Φ-determinant,
scan sampling and serialisation, cutoff profiles and the conjugate-point gap.
"""

import json
import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.funk_engine.errors import DegenerateInputError, FunkValidationError
from src.funk_engine.geometry import (
    CutoffProfile,
    NegatedIncidence,
    ScanGeometry,
    SphericalIncidence,
    conjugate_gap,
    cutoff_eval,
    detector_position,
    incidence_conditions,
    phi_determinant,
    phi_matrix,
    shared_surfaces,
    smoothstep,
    sufficient_condition,
)

STEP = 1e-5


def random_admissible(rng, n, radius=1.5):
    """(x, σ) with x in the open unit ball, any detector angle and r > 0."""
    samples = []
    for _ in range(n):
        rho = math.sqrt(rng.uniform(0.0, 1.0)) * 0.99
        phi = rng.uniform(0.0, 2.0 * math.pi)
        x = np.array([rho * math.cos(phi), rho * math.sin(phi)])
        sigma = (rng.uniform(0.0, 2.0 * math.pi), rng.uniform(0.1, 2.5))
        samples.append((x, sigma))
    return samples


class TestSphericalIncidence:
    def test_detector_inside_ball_rejected(self):
        with pytest.raises(FunkValidationError):
            SphericalIncidence(1.0)

    def test_evaluate_is_distance_minus_radius(self):
        model = SphericalIncidence(1.5)
        assert model.evaluate((0.0, 0.0), (0.0, 1.5)) == pytest.approx(0.0, abs=1e-15)
        assert model.evaluate((0.5, 0.0), (0.0, 0.25)) == pytest.approx(0.75)

    def test_gradients_match_finite_differences(self):
        model = SphericalIncidence(1.5)
        rng = np.random.default_rng(1)
        for x, sigma in random_admissible(rng, 1000):
            t, r = sigma
            fd_x = np.array(
                [
                    (model.evaluate(x + STEP * e, sigma) - model.evaluate(x - STEP * e, sigma)) / (2 * STEP)
                    for e in np.eye(2)
                ]
            )
            fd_sigma = np.array(
                [
                    (model.evaluate(x, (t + STEP, r)) - model.evaluate(x, (t - STEP, r))) / (2 * STEP),
                    (model.evaluate(x, (t, r + STEP)) - model.evaluate(x, (t, r - STEP))) / (2 * STEP),
                ]
            )
            np.testing.assert_allclose(model.grad_x(x, sigma), fd_x, rtol=1e-6, atol=1e-8)
            np.testing.assert_allclose(model.grad_sigma(x, sigma), fd_sigma, rtol=1e-6, atol=1e-8)

    def test_mixed_hessian_matches_finite_differences(self):
        model = SphericalIncidence(1.5)
        rng = np.random.default_rng(2)
        for x, sigma in random_admissible(rng, 1000):
            t, r = sigma
            column_t = (model.grad_x(x, (t + STEP, r)) - model.grad_x(x, (t - STEP, r))) / (2 * STEP)
            column_r = (model.grad_x(x, (t, r + STEP)) - model.grad_x(x, (t, r - STEP))) / (2 * STEP)
            expected = np.stack([column_t, column_r], axis=1)
            np.testing.assert_allclose(model.mixed_hessian(x, sigma), expected, rtol=1e-6, atol=1e-8)

    def test_gradients_never_vanish(self):
        model = SphericalIncidence(1.5)
        rng = np.random.default_rng(3)
        for x, sigma in random_admissible(rng, 200):
            grad_x_norm, grad_sigma_norm = incidence_conditions(model, x, sigma)
            assert grad_x_norm == pytest.approx(1.0)
            assert grad_sigma_norm >= 1.0

    def test_coincident_point_is_degenerate(self):
        model = SphericalIncidence(1.5)
        with pytest.raises(DegenerateInputError):
            model.grad_x(detector_position(0.3, 1.5), (0.3, 1.0))

    def test_detector_radius_must_exceed_one(self):
        with pytest.raises(ValueError):
            SphericalIncidence(1.0)


class TestPhiDeterminant:
    def test_centre_value(self):
        # det Φ = −(y' × g)/|y − x|; at x = 0, t = 0 this is −1
        model = SphericalIncidence(1.5)
        assert phi_determinant(model, (0.0, 0.0), (0.0, 1.5)) == pytest.approx(-1.0, rel=1e-12)

    def test_matrix_layout(self):
        model = SphericalIncidence(1.5)
        x, sigma = np.array([0.2, -0.3]), (1.1, 1.2)
        phi = phi_matrix(model, x, sigma)
        np.testing.assert_array_equal(phi[:2, :2], model.mixed_hessian(x, sigma))
        np.testing.assert_array_equal(phi[:2, 2], model.grad_x(x, sigma))
        np.testing.assert_array_equal(phi[2, :2], model.grad_sigma(x, sigma))
        assert phi[2, 2] == model.evaluate(x, sigma)

    def test_negated_incidence_flips_sign_keeps_magnitude(self):
        model = SphericalIncidence(1.5)
        negated = NegatedIncidence(model)
        rng = np.random.default_rng(4)
        for x, (t, _) in random_admissible(rng, 100):
            y = detector_position(t, 1.5)
            sigma = (t, float(np.hypot(*(y - x))))
            det = phi_determinant(model, x, sigma)
            # three rows of a 3×3 matrix change sign
            assert phi_determinant(negated, x, sigma) == pytest.approx(-det, rel=1e-12)
            assert abs(phi_determinant(negated, x, sigma)) == pytest.approx(abs(det), rel=1e-12)

    def test_swapping_parameter_coordinates_flips_sign(self):
        model = SphericalIncidence(1.5)
        phi = phi_matrix(model, (0.1, 0.4), (2.0, 1.3))
        swapped = phi[:, [1, 0, 2]]
        assert np.linalg.det(swapped) == pytest.approx(-np.linalg.det(phi), rel=1e-12)

    def test_nonzero_under_sufficient_condition(self):
        geom = ScanGeometry(detector_radius=1.5)
        model = SphericalIncidence(1.5)
        rng = np.random.default_rng(5)
        checked = 0
        while checked < 100:
            t_y, t_z = rng.uniform(-math.pi, math.pi, 2)
            if not sufficient_condition(t_y, t_z, geom):
                continue
            radius = math.sqrt(rng.uniform(0.0, 1.0))
            angle = rng.uniform(-0.5 * math.pi, 0.5 * math.pi)
            x = np.array([radius * math.cos(angle), radius * math.sin(angle)])
            y = detector_position(t_y, 1.5)
            assert abs(phi_determinant(model, x, (t_y, float(np.hypot(*(y - x)))))) > 0.0
            checked += 1

    def test_sufficient_condition(self):
        geom = ScanGeometry(detector_radius=1.5)
        assert sufficient_condition(0.0, 0.0, geom)
        assert not sufficient_condition(0.0, math.pi, geom)


class TestScanGeometry:
    def test_full_scan_sampling(self):
        geom = ScanGeometry(detector_radius=1.5, n_detectors=8, n_radii=5)
        np.testing.assert_allclose(geom.detector_angles(), 2 * np.pi * np.arange(8) / 8)
        assert geom.is_full
        assert geom.r_min == pytest.approx(0.5)
        assert geom.r_max == pytest.approx(2.5)
        assert geom.detector_weights().sum() == pytest.approx(2 * math.pi * 1.5)
        assert geom.cutoff_kind == "constant-one"

    def test_partial_scan_arc(self):
        geom = ScanGeometry(detector_radius=1.5, delta=0.3, n_detectors=11)
        angles = geom.detector_angles()
        half = math.acos(-0.3 / 1.5)
        assert angles[0] == pytest.approx(-half)
        assert angles[-1] == pytest.approx(half)
        assert np.all(1.5 * np.cos(angles) >= -0.3 - 1e-12)
        assert geom.detector_weights().sum() == pytest.approx(2 * half * 1.5)
        assert geom.cutoff_kind == "smooth-partial"

    def test_infinite_delta_is_full_scan(self):
        assert ScanGeometry(delta=math.inf).is_full

    @pytest.mark.parametrize(
        "fields",
        [
            {"delta": -0.1},
            {"delta": 1.5},
            {"r_min": 2.0, "r_max": 1.0},
            {"r_min": 0.0},
            {"detector_radius": 0.9},
            {"cutoff_kind": "smooth-partial"},
        ],
    )
    def test_invalid_geometries(self, fields):
        with pytest.raises(ValidationError):
            ScanGeometry(**fields)

    def test_json_round_trip(self, partial_geom):
        text = partial_geom.to_json()
        assert set(json.loads(text)) == {
            "detector_radius",
            "delta",
            "n_detectors",
            "r_min",
            "r_max",
            "n_radii",
            "cutoff_kind",
        }
        assert ScanGeometry.from_json(text) == partial_geom

    def test_full_scan_serialises_null_delta(self, full_geom):
        assert '"delta": null' in full_geom.to_json()

    def test_parse_full(self):
        geom = ScanGeometry.parse("full:R=1.5,nd=180,nr=160")
        assert geom == ScanGeometry(detector_radius=1.5, n_detectors=180, n_radii=160)

    def test_parse_partial_with_window(self):
        geom = ScanGeometry.parse("partial:delta=0.3,R=2,nd=90,nr=40,rmin=1.2,rmax=2.8,cutoff=one")
        assert geom.delta == 0.3
        assert geom.detector_radius == 2.0
        assert (geom.r_min, geom.r_max) == (1.2, 2.8)
        assert geom.cutoff_kind == "constant-one"

    @pytest.mark.parametrize(
        "text",
        ["circle:R=1.5", "full:R=1.5,delta=0.3", "partial:R=1.5", "full:R=abc", "full:R=1.5,foo=1", "full:R"],
    )
    def test_parse_errors(self, text):
        with pytest.raises(FunkValidationError):
            ScanGeometry.parse(text)


class TestCutoff:
    def test_constant_one(self, full_geom):
        for t in np.linspace(0.0, 2 * math.pi, 7):
            assert cutoff_eval(full_geom.cutoff, t, full_geom) == 1.0

    def test_smooth_partial_values(self, partial_geom):
        profile = partial_geom.cutoff
        assert cutoff_eval(profile, 0.0, partial_geom) == 1.0
        assert cutoff_eval(profile, math.pi, partial_geom) == 0.0
        values = profile.values(np.linspace(-1.0, 1.0, 201))
        assert np.all((values >= 0.0) & (values <= 1.0))

    def test_smoothstep_is_c2_at_the_ends(self):
        h = 1e-4
        for v in (0.0, 1.0):
            first = (smoothstep(v + h) - smoothstep(v - h)) / (2 * h)
            second = (smoothstep(v + h) - 2 * smoothstep(v) + smoothstep(v - h)) / h ** 2
            assert abs(first) < 1e-6
            assert abs(second) < 1e-2

    def test_smooth_partial_requires_delta(self):
        with pytest.raises(ValidationError):
            CutoffProfile(kind="smooth-partial")

    def test_cutoff_values_vanish_at_arc_ends(self, partial_geom):
        values = partial_geom.cutoff_values()
        assert values[0] == pytest.approx(0.0, abs=1e-12)
        assert values[-1] == pytest.approx(0.0, abs=1e-12)


class TestConjugateGap:
    def test_symmetric_pair_on_horizontal_axis(self, full_geom):
        model = SphericalIncidence(1.5)
        x, y = (0.3, 0.0), (-0.3, 0.0)
        surfaces = shared_surfaces(x, y, full_geom)
        assert [t for t, _ in surfaces] == pytest.approx([math.pi / 2, 3 * math.pi / 2])
        assert conjugate_gap(model, x, y, full_geom) > 0.0

    def test_symmetric_in_arguments(self, full_geom):
        model = SphericalIncidence(1.5)
        rng = np.random.default_rng(6)
        for _ in range(100):
            x, y = rng.uniform(-0.7, 0.7, 2), rng.uniform(-0.7, 0.7, 2)
            assert conjugate_gap(model, x, y, full_geom) == conjugate_gap(model, y, x, full_geom)

    def test_linear_scaling_as_points_merge(self, full_geom):
        model = SphericalIncidence(1.5)
        x = np.array([0.5, 0.0])
        ratios = [
            conjugate_gap(model, x, x + np.array([0.0, d]), full_geom) / d for d in (1e-3, 2e-3, 5e-3, 1e-2)
        ]
        assert max(ratios) / min(ratios) < 1.2

    def test_empty_intersection_is_infinite(self):
        geom = ScanGeometry(detector_radius=1.5, delta=0.3)
        model = SphericalIncidence(1.5)
        assert shared_surfaces((-0.9, 0.0), (-0.89, 0.0), geom) == []
        assert conjugate_gap(model, (-0.9, 0.0), (-0.89, 0.0), geom) == math.inf

    def test_positive_on_random_pairs(self, full_geom):
        model = SphericalIncidence(1.5)
        rng = np.random.default_rng(7)
        for _ in range(1000):
            points = []
            for _ in range(2):
                radius = 0.999 * math.sqrt(rng.uniform(0.0, 1.0))
                angle = rng.uniform(0.0, 2 * math.pi)
                points.append(np.array([radius * math.cos(angle), radius * math.sin(angle)]))
            assert conjugate_gap(model, points[0], points[1], full_geom) > 0.0

    def test_coincident_points_rejected(self, full_geom):
        with pytest.raises(DegenerateInputError):
            conjugate_gap(SphericalIncidence(1.5), (0.1, 0.1), (0.1, 0.1), full_geom)
