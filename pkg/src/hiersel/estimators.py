"""scikit-learn style wrappers around temperature scaling and hierarchical inference."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import UnknownLabel
from .guarantee import calibrate_threshold
from .hierarchy import Hierarchy
from .metrics import hier_risk_01, mean_coverage
from .rules import DEFAULT_EPS_TIGHT, check_rule, predict_nodes
from .scores import T_MAX, T_MIN, ScoreTable, fit_temperature, lift_to_nodes, softmax


def _label_columns(h: Hierarchy, y):
    """Leaf column index per entry of ``y`` (leaf names or column indices)."""
    y = np.asarray(y)
    if y.dtype.kind in "iu":
        cols = y.astype(np.int64)
        if np.any((cols < 0) | (cols >= h.n_leaves)):
            raise UnknownLabel("label column out of range")
        return cols
    cols = []
    for name in y.astype(str):
        if name not in h:
            raise UnknownLabel(f"unknown label {name!r}")
        pos = int(h.leaf_position(h.index(name)))
        if pos < 0:
            raise UnknownLabel(f"label {name!r} is not a leaf")
        cols.append(pos)
    return np.array(cols, dtype=np.int64)


class TemperatureScaler(TransformerMixin, BaseEstimator):
    """Fit a single softmax temperature on logits by minimising NLL.

    ``transform`` returns temperature-scaled probabilities.
    """

    def __init__(self, bounds=(T_MIN, T_MAX), tol=1e-4):
        self.bounds = bounds
        self.tol = tol

    def fit(self, X, y):
        X = check_array(X)
        y = np.asarray(y, dtype=np.int64)
        self.temperature_ = fit_temperature(X, y, bounds=self.bounds, tol=self.tol)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "temperature_")
        X = check_array(X)
        return softmax(X / self.temperature_)


class HierarchicalSelectiveClassifier(ClassifierMixin, BaseEstimator):
    """Predict hierarchy nodes from leaf probabilities with a confidence threshold.

    Parameters
    ----------
    hierarchy : Hierarchy
    rule : str
        One of ``selective``, ``climbing``, ``max-coverage``, ``jumping``.
    threshold : float or None
        Fixed threshold.  When ``None``, :meth:`fit` calibrates one for
        target accuracy ``1 - alpha`` (climbing only).
    alpha, delta, eps_tight : float
        Calibration parameters.

    ``X`` holds leaf probabilities in the hierarchy's canonical leaf order;
    ``y`` holds leaf names or leaf column indices.
    """

    def __init__(self, hierarchy=None, rule="climbing", threshold=None, alpha=0.1, delta=0.1,
                 eps_tight=DEFAULT_EPS_TIGHT):
        self.hierarchy = hierarchy
        self.rule = rule
        self.threshold = threshold
        self.alpha = alpha
        self.delta = delta
        self.eps_tight = eps_tight

    def _node_scores(self, X):
        X = check_array(X)
        if X.shape[1] != self.hierarchy.n_leaves:
            raise ValueError(f"expected {self.hierarchy.n_leaves} leaf columns, got {X.shape[1]}")
        return lift_to_nodes(self.hierarchy, X)

    def fit(self, X, y=None):
        if not isinstance(self.hierarchy, Hierarchy):
            raise TypeError("hierarchy must be a Hierarchy")
        check_rule(self.rule)
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array(self.hierarchy.names, dtype=object)
        self.certificate_ = None
        if self.threshold is not None:
            self.threshold_ = float(self.threshold)
            return self
        if y is None:
            raise ValueError("y is required to calibrate a threshold")
        table = ScoreTable.from_arrays(self.hierarchy, X, _label_columns(self.hierarchy, y))
        self.certificate_ = calibrate_threshold(
            self.hierarchy, table, self.rule, self.alpha, self.delta, self.eps_tight,
            temperature=None,
        )
        self.threshold_ = self.certificate_.theta_hat
        return self

    def predict_nodes(self, X):
        check_is_fitted(self, "threshold_")
        return predict_nodes(self.hierarchy, self._node_scores(X), self.threshold_, self.rule)

    def predict(self, X):
        return self.classes_[self.predict_nodes(X)]

    def predict_confidence(self, X):
        """Confidence of each predicted node."""
        check_is_fitted(self, "threshold_")
        scores = self._node_scores(X)
        nodes = predict_nodes(self.hierarchy, scores, self.threshold_, self.rule)
        return scores[np.arange(len(scores)), nodes]

    def coverage(self, X):
        return mean_coverage(self.hierarchy, self.predict_nodes(X))

    def score(self, X, y, sample_weight=None):
        """Hierarchical accuracy: the prediction is the true leaf or an ancestor of it."""
        nodes = self.predict_nodes(X)
        labels = self.hierarchy.leaves[_label_columns(self.hierarchy, y)]
        if sample_weight is None:
            return 1.0 - hier_risk_01(self.hierarchy, nodes, labels)
        right = self.hierarchy.is_ancestor(nodes, labels)
        return float(np.average(right, weights=sample_weight))
