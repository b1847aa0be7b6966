"""Estimator facade: fit/predict/attest surface, parameter plumbing, and
input validation."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from power_attest import InsufficientTraces, TemplateAttestor

from conftest import window_batch


@pytest.fixture(scope="module")
def labeled_rows(alpha_profile, bravo_profile):
    X, y = [], []
    for profile in (alpha_profile, bravo_profile):
        for trace in window_batch(profile, 8):
            X.append(trace.samples)
            y.append(profile.program_id)
    return np.array(X), np.array(y)


@pytest.fixture(scope="module")
def holdout_rows(alpha_profile, bravo_profile):
    X, y = [], []
    for profile in (alpha_profile, bravo_profile):
        for trace in window_batch(profile, 3, offset=8):
            X.append(trace.samples)
            y.append(profile.program_id)
    return np.array(X), np.array(y)


@pytest.fixture(scope="module")
def fitted(labeled_rows):
    X, y = labeled_rows
    return TemplateAttestor().fit(X, y)


class TestFit:
    def test_returns_self_and_sorted_classes(self, fitted):
        assert isinstance(fitted, TemplateAttestor)
        assert list(fitted.classes_) == ["alpha", "bravo"]

    def test_templates_are_calibrated(self, fitted):
        for label in fitted.classes_:
            template = fitted.templates_[label]
            assert template.calibrated
            assert template.program_id == label

    def test_bucket_recorded(self, fitted, labeled_rows):
        X, _ = labeled_rows
        assert fitted.bucket_.size == X.shape[1]

    def test_integer_labels_become_strings(self, labeled_rows):
        X, _ = labeled_rows
        y = np.array([0] * 8 + [1] * 8)
        est = TemplateAttestor().fit(X, y)
        assert list(est.classes_) == ["0", "1"]
        assert set(est.predict(X[:1])) <= {"0", "1"}

    def test_bad_calibration_fraction(self, labeled_rows):
        X, y = labeled_rows
        for bad in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(ValueError):
                TemplateAttestor(calibration_fraction=bad).fit(X, y)

    def test_non_bucket_width_rejected(self, labeled_rows):
        X, y = labeled_rows
        with pytest.raises(ValueError, match="bucket"):
            TemplateAttestor().fit(X[:, :1000], y)

    def test_too_few_rows_per_label(self, labeled_rows):
        X, y = labeled_rows
        # Five rows split 2/3 at the default fraction; calibration needs 4.
        keep = np.r_[0:5, 8:16]
        with pytest.raises(InsufficientTraces):
            TemplateAttestor().fit(X[keep], y[keep])

    def test_nan_rows_rejected(self, labeled_rows):
        X, y = labeled_rows
        dirty = X.copy()
        dirty[0, 0] = np.nan
        with pytest.raises(ValueError):
            TemplateAttestor().fit(dirty, y)


class TestDecisionFunction:
    def test_shape_and_range(self, fitted, holdout_rows):
        X, _ = holdout_rows
        scores = fitted.decision_function(X)
        assert scores.shape == (len(X), 2)
        assert np.all(scores >= -1.0) and np.all(scores <= 1.0)

    def test_own_label_scores_highest(self, fitted, holdout_rows):
        X, y = holdout_rows
        scores = fitted.decision_function(X)
        for i, label in enumerate(y):
            j = list(fitted.classes_).index(label)
            assert np.argmax(scores[i]) == j
            assert scores[i, j] > 0.9

    def test_wrong_width_rejected(self, fitted):
        with pytest.raises(ValueError):
            fitted.decision_function(np.zeros((1, 64)))

    def test_unfitted_raises(self):
        with pytest.raises(NotFittedError):
            TemplateAttestor().decision_function(np.zeros((1, 2**17)))


class TestPredict:
    def test_recovers_holdout_labels(self, fitted, holdout_rows):
        X, y = holdout_rows
        assert list(fitted.predict(X)) == list(y)

    def test_training_rows_classified(self, fitted, labeled_rows):
        X, y = labeled_rows
        assert list(fitted.predict(X)) == list(y)


class TestAttest:
    def test_returns_bool_array(self, fitted, holdout_rows):
        X, _ = holdout_rows
        out = fitted.attest(X, "alpha")
        assert out.dtype == bool, out
        assert out.shape == (len(X),)

    def test_foreign_windows_fail(self, fitted, holdout_rows):
        X, y = holdout_rows
        foreign = X[y == "bravo"]
        assert not fitted.attest(foreign, "alpha").any()

    def test_calibration_rows_pass_at_design_rate(self, fitted, labeled_rows):
        # The threshold is the 25th-percentile self-correlation, so exactly
        # three of each label's four calibration rows sit at or above it.
        X, y = labeled_rows
        for label in fitted.classes_:
            calib = X[y == label][4:]
            assert fitted.attest(calib, label).sum() == 3

    def test_own_windows_sit_at_the_threshold_scale(self, fitted, holdout_rows):
        X, y = holdout_rows
        own = X[y == "alpha"]
        threshold = fitted.templates_["alpha"].corr_thres
        scores = fitted.decision_function(own)[:, 0]
        assert np.all(scores > threshold - 1e-3)

    def test_unknown_label(self, fitted, holdout_rows):
        X, _ = holdout_rows
        with pytest.raises(ValueError, match="zulu"):
            fitted.attest(X, "zulu")


class TestSklearnPlumbing:
    def test_get_params_round_trip(self):
        est = TemplateAttestor(
            filter_window=31, filter_order=2, percentile=10.0,
            calibration_fraction=0.4,
        )
        params = est.get_params()
        assert params["filter_window"] == 31
        assert params["percentile"] == 10.0
        other = TemplateAttestor().set_params(**params)
        assert other.get_params() == params

    def test_clone_refits_identically(self, fitted, labeled_rows):
        X, y = labeled_rows
        twin = clone(fitted).fit(X, y)
        for label in fitted.classes_:
            a = fitted.templates_[label]
            b = twin.templates_[label]
            assert np.array_equal(a.samples, b.samples)
            assert a.corr_thres == b.corr_thres

    def test_clone_is_unfitted(self, fitted):
        with pytest.raises(NotFittedError):
            clone(fitted).decision_function(np.zeros((1, 2**17)))
