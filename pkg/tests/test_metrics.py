"""Distance metrics against closed forms and scalar reimplementations."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoloc.errors import ConfigError, DataError, ShapeError
from geoloc.metrics import (
    EARTH_RADIUS_KM,
    build_cdf,
    env_accuracy,
    euclidean_errors,
    evaluate_positions,
    haversine,
    haversine_errors,
    haversine_mde,
    mde,
    rmse,
)


def _haversine_scalar(lat1, lon1, lat2, lon2):
    """Independent single-point implementation using the math module."""
    phi1, lam1 = math.radians(lat1), math.radians(lon1)
    phi2, lam2 = math.radians(lat2), math.radians(lon2)
    gamma = math.sin((phi2 - phi1) / 2.0) ** 2
    arg = gamma + math.cos(phi1) * math.cos(phi2) * math.sin((lam2 - lam1) / 2.0) ** 2
    arg = min(max(arg, 0.0), 1.0)
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(arg))


class TestHaversine:
    def test_antipodal_on_equator(self):
        assert haversine(0.0, 0.0, 0.0, 180.0) == pytest.approx(
            math.pi * EARTH_RADIUS_KM, rel=1e-6
        )

    def test_pole_to_equator_quarter_circle(self):
        assert haversine(0.0, 0.0, 90.0, 0.0) == pytest.approx(
            math.pi * EARTH_RADIUS_KM / 2.0, rel=1e-12
        )

    def test_zero_distance(self):
        assert haversine(51.2, 4.4, 51.2, 4.4) == 0.0

    def test_one_degree_longitude_at_equator(self):
        expected = math.pi * EARTH_RADIUS_KM / 180.0
        assert haversine(0.0, 0.0, 0.0, 1.0) == pytest.approx(expected, rel=1e-12)

    def test_matches_scalar_loop_on_random_points(self, rng):
        lat1, lat2 = rng.uniform(-90, 90, (2, 1000))
        lon1, lon2 = rng.uniform(-180, 180, (2, 1000))
        vec = haversine(lat1, lon1, lat2, lon2)
        for i in range(1000):
            ref = _haversine_scalar(lat1[i], lon1[i], lat2[i], lon2[i])
            if ref > 0:
                assert abs(vec[i] - ref) / ref < 1e-9
            else:
                assert vec[i] == pytest.approx(0.0, abs=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(
        lat1=st.floats(-90, 90),
        lon1=st.floats(-180, 180),
        lat2=st.floats(-90, 90),
        lon2=st.floats(-180, 180),
    )
    def test_symmetry_and_bounds(self, lat1, lon1, lat2, lon2):
        d_ab = haversine(lat1, lon1, lat2, lon2)
        d_ba = haversine(lat2, lon2, lat1, lon1)
        assert d_ab == pytest.approx(d_ba, abs=1e-9)
        assert 0.0 <= d_ab <= math.pi * EARTH_RADIUS_KM + 1e-9


class TestMde:
    def test_three_four_five(self):
        assert mde(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]])) == 5.0

    def test_matches_scalar_loop(self, rng):
        pred = rng.normal(size=(1000, 2))
        true = rng.normal(size=(1000, 2))
        got = mde(pred, true)
        ref = sum(
            math.hypot(pred[i, 0] - true[i, 0], pred[i, 1] - true[i, 1])
            for i in range(1000)
        ) / 1000.0
        assert abs(got - ref) / ref < 1e-9

    def test_perfect_prediction_is_zero(self, rng):
        pts = rng.normal(size=(50, 2))
        assert mde(pts, pts) == 0.0

    def test_shape_checks(self):
        with pytest.raises(ShapeError):
            mde(np.zeros((2, 3)), np.zeros((2, 3)))
        with pytest.raises(ShapeError):
            mde(np.zeros((2, 2)), np.zeros((3, 2)))
        with pytest.raises(DataError):
            mde(np.zeros((0, 2)), np.zeros((0, 2)))


class TestHaversineMde:
    def test_reports_meters_for_lonlat_rows(self):
        pred = np.array([[0.0, 0.0]])  # (lon, lat)
        true = np.array([[1.0, 0.0]])
        expected_m = math.pi * EARTH_RADIUS_KM / 180.0 * 1000.0
        assert haversine_mde(pred, true) == pytest.approx(expected_m, rel=1e-12)

    def test_matches_scalar_loop(self, rng):
        pred = np.column_stack([rng.uniform(4, 5, 1000), rng.uniform(51, 52, 1000)])
        true = np.column_stack([rng.uniform(4, 5, 1000), rng.uniform(51, 52, 1000)])
        got = haversine_mde(pred, true)
        ref = sum(
            _haversine_scalar(pred[i, 1], pred[i, 0], true[i, 1], true[i, 0]) * 1000.0
            for i in range(1000)
        ) / 1000.0
        assert abs(got - ref) / ref < 1e-9


class TestRmse:
    def test_hand_value(self):
        pred = np.array([[1.0, 0.0]])
        true = np.array([[0.0, 0.0]])
        assert rmse(pred, true) == pytest.approx(math.sqrt(0.5), rel=1e-15)


class TestEnvAccuracy:
    def test_counts_correct_signs(self):
        logits = np.array([2.0, -1.0, 0.5, -0.1])
        env = np.array([1, 0, 0, 0])
        assert env_accuracy(logits, env) == 0.75

    def test_label_validation(self):
        with pytest.raises(DataError):
            env_accuracy(np.array([1.0]), np.array([2]))

    def test_shape_validation(self):
        with pytest.raises(ShapeError):
            env_accuracy(np.zeros(3), np.zeros(2))


class TestCdf:
    def test_probabilities_are_k_over_n(self):
        errors = [3.0, 1.0, 2.0, 4.0]
        values, probs = build_cdf(errors)
        np.testing.assert_array_equal(values, [1.0, 2.0, 3.0, 4.0])
        np.testing.assert_array_equal(probs, [0.25, 0.5, 0.75, 1.0])

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            build_cdf([])

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(0, 1e6), min_size=1, max_size=200))
    def test_cdf_properties(self, errors):
        values, probs = build_cdf(errors)
        assert np.all(np.diff(values) >= 0)
        assert probs[-1] == 1.0
        assert np.all(np.diff(probs) > 0)


class TestEvaluatePositions:
    def test_mde_report(self):
        pred = np.array([[0.0, 0.0], [0.0, 0.0]])
        true = np.array([[3.0, 4.0], [0.0, 0.0]])
        report = evaluate_positions(pred, true, metric="mde")
        assert report.mean_error == 2.5
        assert report.unit == "native"
        assert report.n_samples == 2
        assert report.median_error == 0.0  # ceil(0.5*2)=1st sorted error
        assert report.p90_error == 5.0

    def test_haversine_report_units(self):
        pred = np.array([[0.0, 0.0]])
        true = np.array([[1.0, 0.0]])
        report = evaluate_positions(pred, true, metric="haversine")
        assert report.unit == "m"
        assert report.mean_error == pytest.approx(
            math.pi * EARTH_RADIUS_KM / 180.0 * 1000.0, rel=1e-12
        )

    def test_unknown_metric(self):
        with pytest.raises(ConfigError):
            evaluate_positions(np.zeros((1, 2)), np.zeros((1, 2)), metric="chebyshev")

    def test_to_dict_merges_extras(self):
        report = evaluate_positions(
            np.zeros((1, 2)), np.zeros((1, 2)), extras={"environment": "indoor"}
        )
        d = report.to_dict()
        assert d["environment"] == "indoor"
        assert d["mean_error"] == 0.0


class TestEuclideanErrors:
    def test_per_sample_values(self):
        pred = np.array([[0.0, 0.0], [1.0, 1.0]])
        true = np.array([[3.0, 4.0], [1.0, 1.0]])
        np.testing.assert_array_equal(euclidean_errors(pred, true), [5.0, 0.0])

    def test_haversine_errors_vector(self):
        pred = np.array([[0.0, 0.0], [0.0, 0.0]])
        true = np.array([[0.0, 0.0], [1.0, 0.0]])
        errs = haversine_errors(pred, true)
        assert errs[0] == 0.0
        assert errs[1] == pytest.approx(math.pi * EARTH_RADIUS_KM / 180.0 * 1000.0, rel=1e-12)
