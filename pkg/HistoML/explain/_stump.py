"""
Decision stumps over feature activations and the per-class feature ranking
they induce.
"""

# Authors: HistoML developers
# License: BSD 3 clause

from dataclasses import dataclass
from numbers import Integral

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin, _fit_context
from sklearn.utils import check_array
from sklearn.utils._param_validation import Interval
from sklearn.utils.multiclass import check_classification_targets, type_of_target
from sklearn.utils.validation import check_is_fitted

from .._labels import ClassLabel, resolve_label
from ..exceptions import ValidationError

try:
    from sklearn.utils.validation import validate_data
except ImportError:  # scikit-learn < 1.6

    def validate_data(estimator, *args, **kwargs):
        return estimator._validate_data(*args, **kwargs)


@dataclass(frozen=True)
class StumpResult:
    """Best single-threshold rule on one feature.

    A sample is predicted positive iff ``polarity * (a - threshold) > 0``.
    """

    feature_index: int
    threshold: float
    polarity: int
    accuracy: float

    def predict(self, a):
        return self.polarity * (np.asarray(a, dtype=np.float64) - self.threshold) > 0

    def to_json(self):
        return {
            "index": self.feature_index,
            "threshold": self.threshold,
            "polarity": self.polarity,
            "accuracy": self.accuracy,
        }


def _candidates(a, y):
    """Candidate thresholds and correct counts of the positive polarity.

    Thresholds are a sentinel below the minimum followed by the midpoints
    between consecutive distinct values, in increasing order.
    """
    values, inverse = np.unique(a, return_inverse=True)
    inverse = inverse.ravel()
    positives = np.bincount(inverse[y], minlength=values.size)
    negatives = np.bincount(inverse[~y], minlength=values.size)
    # samples at or below each midpoint are predicted negative
    below_pos = np.cumsum(positives)[:-1]
    below_neg = np.cumsum(negatives)[:-1]
    total_pos = positives.sum()
    correct = np.concatenate([[total_pos], total_pos - below_pos + below_neg])
    sentinel = values[0] - max(1.0, abs(values[0]))
    thresholds = np.concatenate([[sentinel], (values[:-1] + values[1:]) / 2])
    return thresholds, correct.astype(np.int64)


def stump_fit(activations, labels, feature_index=0):
    """Exhaustive decision stump on one feature.

    Parameters
    ----------
    activations : array-like of shape (n_samples,)
        Finite activations, at least two.

    labels : array-like of bool of shape (n_samples,)
        True for the positive class.

    feature_index : int, default=0
        Index recorded in the result.

    Returns
    -------
    result : StumpResult
        Highest accuracy over both polarities; ties go to the lower threshold
        and then to the positive polarity.

    Examples
    --------
    >>> from HistoML.explain import stump_fit
    >>> result = stump_fit([0.1, 0.2, 0.9, 1.0], [False, False, True, True])
    >>> round(result.threshold, 6), result.polarity, result.accuracy
    (0.55, 1, 1.0)
    """
    a = np.asarray(activations, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=bool).ravel()
    if a.shape != y.shape:
        raise ValidationError("activations and labels differ in length", field="labels")
    if a.size < 2:
        raise ValidationError("a stump needs at least two samples", field="activations")
    if not np.isfinite(a).all():
        raise ValidationError("activations must be finite", field="activations")
    thresholds, correct = _candidates(a, y)
    # interleave (t0, +), (t0, -), (t1, +), ... so argmax applies the tie rule
    scores = np.column_stack([correct, a.size - correct]).ravel()
    best = int(np.argmax(scores))
    return StumpResult(
        feature_index=int(feature_index),
        threshold=float(thresholds[best // 2]),
        polarity=1 if best % 2 == 0 else -1,
        accuracy=float(scores[best] / a.size),
    )


def _fit_all(X, y, n_jobs):
    X = check_array(X, dtype=np.float64, ensure_min_samples=2)
    return Parallel(n_jobs=n_jobs)(
        delayed(stump_fit)(X[:, j], y, j) for j in range(X.shape[1])
    )


def _sort_results(results):
    return sorted(results, key=lambda r: (-r.accuracy, r.feature_index))


class DecisionStump(ClassifierMixin, BaseEstimator):
    """One-level decision tree on the single most discriminant feature.

    Parameters
    ----------
    n_jobs : int, default=None
        Number of jobs fitting the per-feature stumps.

    Attributes
    ----------
    classes_ : ndarray of shape (n_classes,)
        The (at most two) classes; the last one is the positive class.

    feature_index_ : int
        Feature of the selected stump.

    threshold_ : float
        Selected threshold.

    polarity_ : {1, -1}
        Selected polarity.

    accuracy_ : float
        Training accuracy of the stump.

    n_features_in_ : int
        Number of features seen during :term:`fit`.

    Examples
    --------
    >>> import numpy as np
    >>> from HistoML.explain import DecisionStump
    >>> X = np.array([[5.0, 0.1], [4.0, 0.2], [5.0, 0.9], [4.0, 1.0]])
    >>> clf = DecisionStump().fit(X, [0, 0, 1, 1])
    >>> clf.feature_index_, clf.predict(X).tolist()
    (1, [0, 0, 1, 1])
    """

    _parameter_constraints = {"n_jobs": [Integral, None]}

    def __init__(self, n_jobs=None):
        self.n_jobs = n_jobs

    def _more_tags(self):
        return {"binary_only": True}

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.classifier_tags.multi_class = False
        return tags

    @_fit_context(prefer_skip_nested_validation=True)
    def fit(self, X, y):
        """Select the best stump over all features.

        Parameters
        ----------
        X : array-like of shape (n_samples, n_features)
            Activations.

        y : array-like of shape (n_samples,)
            Binary targets.

        Returns
        -------
        self : object
            Fitted stump.
        """
        X, y = validate_data(self, X, y, dtype=np.float64, ensure_min_samples=2)
        check_classification_targets(y)
        y_type = type_of_target(y, input_name="y")
        if y_type != "binary":
            raise ValueError(
                "Only binary classification is supported. The type of the target "
                "is %s." % y_type
            )
        self.classes_ = np.unique(y)
        best = _sort_results(_fit_all(X, y == self.classes_[-1], self.n_jobs))[0]
        self.feature_index_ = best.feature_index
        self.threshold_ = best.threshold
        self.polarity_ = best.polarity
        self.accuracy_ = best.accuracy
        return self

    def predict(self, X):
        """Predict the class of every sample.

        Parameters
        ----------
        X : array-like of shape (n_samples, n_features)
            Activations.

        Returns
        -------
        y : ndarray of shape (n_samples,)
        """
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        positive = self.polarity_ * (X[:, self.feature_index_] - self.threshold_) > 0
        return self.classes_[positive.astype(int) * (self.classes_.size - 1)]


@dataclass(frozen=True)
class FeatureRanking:
    """Features ordered by one-vs-rest stump accuracy for ``target_class``."""

    target_class: ClassLabel
    ranked: tuple

    @property
    def indices(self):
        return [result.feature_index for result in self.ranked]

    def to_json(self):
        return {
            "target_class": self.target_class.slug,
            "k": len(self.ranked),
            "features": [result.to_json() for result in self.ranked],
        }


class StumpFeatureRanker(TransformerMixin, BaseEstimator):
    """Rank features by the accuracy of their best decision stump.

    Parameters
    ----------
    k : int, default=100
        Number of features kept; clamped to the number of features.

    n_jobs : int, default=None
        Number of jobs fitting the per-feature stumps.

    Attributes
    ----------
    ranking_ : list of StumpResult
        The top features, by decreasing accuracy then increasing index.

    n_features_in_ : int
        Number of features seen during :term:`fit`.
    """

    _parameter_constraints = {
        "k": [Interval(Integral, 1, None, closed="left")],
        "n_jobs": [Integral, None],
    }

    def __init__(self, k=100, n_jobs=None):
        self.k = k
        self.n_jobs = n_jobs

    @_fit_context(prefer_skip_nested_validation=True)
    def fit(self, X, y):
        """Fit one stump per feature and keep the best ``k``.

        Parameters
        ----------
        X : array-like of shape (n_samples, n_features)
            Activations.

        y : array-like of bool of shape (n_samples,)
            Positive-class indicator.

        Returns
        -------
        self : object
            Fitted ranker.
        """
        X, y = validate_data(self, X, y, dtype=np.float64, ensure_min_samples=2)
        results = _sort_results(_fit_all(X, y.astype(bool), self.n_jobs))
        self.ranking_ = results[: self.k]
        return self

    def transform(self, X):
        """Columns of the ranked features, in ranking order."""
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return X[:, [result.feature_index for result in self.ranking_]]


def rank_features(table, target, k=100, n_jobs=None):
    """Rank the features of a table for one class against the others.

    Parameters
    ----------
    table : FeatureTable
        Labelled activations.

    target : ClassLabel
        Positive class of the one-vs-rest split.

    k : int, default=100
        Length of the ranking, clamped to the number of features.

    n_jobs : int, default=None
        Number of jobs.

    Returns
    -------
    ranking : FeatureRanking
    """
    if table.labels is None:
        raise ValidationError("ranking features needs a labelled table", field="labels")
    target = resolve_label(target)
    y = np.array([label is target for label in table.labels])
    ranker = StumpFeatureRanker(k=k, n_jobs=n_jobs).fit(table.activations, y)
    return FeatureRanking(target_class=target, ranked=tuple(ranker.ranking_))


def top_activations(table, feature_index, m):
    """Rows with the largest activation of one feature.

    Parameters
    ----------
    table : FeatureTable
        Activations with optional patch references.

    feature_index : int
        Feature to inspect.

    m : int
        Number of rows, at least 1; clamped to the table size.

    Returns
    -------
    refs : list
        ``(row, ref)`` pairs in decreasing activation, ties by row order.
        ``ref`` is the patch reference of the row, or the row itself when the
        table has no references.

    Examples
    --------
    >>> import numpy as np
    >>> from HistoML.inference import FeatureTable
    >>> from HistoML.explain import top_activations
    >>> table = FeatureTable(np.array([[3.0], [1.0], [2.0]]))
    >>> [row for row, _ in top_activations(table, 0, 2)]
    [0, 2]
    """
    if not 0 <= feature_index < table.n_features:
        raise ValidationError(
            "feature index %d out of range [0, %d)" % (feature_index, table.n_features),
            field="feature_index",
        )
    if m < 1:
        raise ValidationError("m must be at least 1", field="m")
    order = np.argsort(-table.activations[:, feature_index], kind="stable")[:m]
    return [(int(row), table.ref(int(row))) for row in order]
