"""Estimator-style facade over template building and matching.

TemplateAttestor exposes the template pipeline through the familiar
fit/decision_function/predict surface: rows of X are bucket-length
execution windows, y holds program labels. Fitting builds one calibrated
template per label; prediction assigns the best-correlated label; attest()
answers the one-vs-threshold question the protocol actually asks.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import InsufficientTraces
from .matcher import pearson
from .template import (
    DEFAULT_FILTER_ORDER,
    DEFAULT_FILTER_WINDOW,
    DEFAULT_PERCENTILE,
    build_template,
    calibrate_threshold,
)
from .trace import Trace, bucket_for_length


class TemplateAttestor(ClassifierMixin, BaseEstimator):
    """Correlation-template classifier over fixed-length execution windows.

    Parameters
    ----------
    filter_window, filter_order : smoothing applied to each label's mean.
    percentile : self-correlation percentile used as the pass threshold.
    calibration_fraction : trailing fraction of each label's rows held out
        for threshold calibration; the rest build the template. Each label
        needs at least 2 building rows and 4 calibration rows.
    """

    def __init__(
        self,
        filter_window: int = DEFAULT_FILTER_WINDOW,
        filter_order: int = DEFAULT_FILTER_ORDER,
        percentile: float = DEFAULT_PERCENTILE,
        calibration_fraction: float = 0.5,
    ):
        self.filter_window = filter_window
        self.filter_order = filter_order
        self.percentile = percentile
        self.calibration_fraction = calibration_fraction

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        if not 0.0 < self.calibration_fraction < 1.0:
            raise ValueError("calibration_fraction must lie in (0, 1)")
        width = X.shape[1]
        bucket = bucket_for_length(width)
        if bucket.size != width:
            raise ValueError(
                f"row width {width} is not a bucket size "
                f"(2^17 through 2^21)"
            )
        self.classes_ = np.array(sorted(set(map(str, y))))
        self.bucket_ = bucket
        templates = {}
        labels = np.asarray(list(map(str, y)))
        for label in self.classes_:
            rows = X[labels == label]
            split = int(round(len(rows) * (1.0 - self.calibration_fraction)))
            build_rows, calib_rows = rows[:split], rows[split:]
            if len(build_rows) < 2 or len(calib_rows) < 4:
                raise InsufficientTraces(
                    f"label {label!r} needs at least 2 building and 4 "
                    f"calibration rows, got {len(build_rows)} and "
                    f"{len(calib_rows)}"
                )
            template = build_template(
                (Trace(samples=row, program_id=label) for row in build_rows),
                bucket,
                self.filter_window,
                self.filter_order,
            )
            templates[label] = calibrate_threshold(
                template,
                (Trace(samples=row, program_id=label) for row in calib_rows),
                self.percentile,
            )
        self.templates_ = templates
        return self

    def decision_function(self, X):
        """Correlation of every row against every fitted template."""
        check_is_fitted(self, "templates_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.bucket_.size:
            raise ValueError(
                f"rows must hold {self.bucket_.size} samples, "
                f"got {X.shape[1]}"
            )
        scores = np.empty((X.shape[0], len(self.classes_)))
        for j, label in enumerate(self.classes_):
            template = self.templates_[label]
            for i in range(X.shape[0]):
                scores[i, j] = pearson(X[i], template.samples)
        return scores

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]

    def attest(self, X, label: str):
        """Boolean pass decision of each row against one label's threshold."""
        check_is_fitted(self, "templates_")
        label = str(label)
        if label not in self.templates_:
            raise ValueError(f"no fitted template for label {label!r}")
        template = self.templates_[label]
        X = check_array(X, dtype=np.float64)
        return np.array(
            [pearson(row, template.samples) >= template.corr_thres for row in X]
        )
