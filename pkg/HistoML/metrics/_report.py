"""
Accuracy reports at patch, region and slide level, in the three-class and
the carcinoma / non-carcinoma scheme, and inter-rater agreement.
"""

# Authors: HistoML developers
# License: BSD 3 clause

import logging
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np
from sklearn.metrics import cohen_kappa_score, confusion_matrix
from sklearn.utils._param_validation import StrOptions, validate_parameter_constraints

from .._labels import BinaryLabel, ClassLabel, resolve_label, to_binary
from ..exceptions import UndefinedMetricError, ValidationError

logger = logging.getLogger(__name__)

LEVELS = ("patch", "region", "slide")
SCHEMES = ("three_class", "binary")


def accuracy(correct, total, *, decimals=3):
    """Fraction of correct items.

    Parameters
    ----------
    correct : int
        Correctly classified items, ``0 <= correct <= total``.

    total : int
        Scored items.

    decimals : int or None, default=3
        Round half-up to this many decimals; None returns the exact ratio.

    Returns
    -------
    accuracy : float

    Raises
    ------
    UndefinedMetricError
        If ``total`` is 0.

    Examples
    --------
    >>> from HistoML.metrics import accuracy
    >>> accuracy(73671, 82487)
    0.893
    >>> accuracy(2267, 2489)
    0.911
    >>> accuracy(0, 10)
    0.0
    """
    correct, total = int(correct), int(total)
    if total == 0:
        raise UndefinedMetricError("accuracy is undefined over zero items")
    if not 0 <= correct <= total:
        raise ValidationError(
            "expected 0 <= correct <= total, got %d / %d" % (correct, total),
            field="correct",
        )
    if decimals is None:
        return correct / total
    quantum = Decimal(1).scaleb(-int(decimals))
    return float((Decimal(correct) / Decimal(total)).quantize(quantum, ROUND_HALF_UP))


def cohen_kappa(a, b):
    """Cohen's kappa between two label sequences.

    Two identical constant sequences have no chance-corrected disagreement to
    measure; their kappa is 1.0.

    Examples
    --------
    >>> from HistoML.metrics import cohen_kappa
    >>> cohen_kappa([0, 0, 1, 1], [0, 1, 0, 1])
    0.0
    >>> cohen_kappa([0, 0, 0, 1], [0, 0, 1, 1])
    0.5
    """
    a, b = list(a), list(b)
    if len(a) != len(b):
        raise ValidationError(
            "label sequences differ in length: %d != %d" % (len(a), len(b)), field="b"
        )
    if not a:
        raise ValidationError("kappa needs at least one rating", field="a")
    if len(set(a)) == 1 and set(a) == set(b):
        return 1.0
    return float(cohen_kappa_score(a, b))


@dataclass(frozen=True)
class MetricsReport:
    """Counts behind an accuracy table.

    ``confusion[i, j]`` counts items of true class ``labels[i]`` predicted as
    ``labels[j]``.
    """

    level: str
    scheme: str
    labels: tuple
    confusion: np.ndarray = field(repr=False)

    @property
    def per_class(self):
        return {
            label: (int(self.confusion[i, i]), int(self.confusion[i].sum()))
            for i, label in enumerate(self.labels)
        }

    @property
    def correct(self):
        return int(np.trace(self.confusion))

    @property
    def total(self):
        return int(self.confusion.sum())

    @property
    def accuracy(self):
        return accuracy(self.correct, self.total)

    def to_json(self):
        return {
            "level": self.level,
            "scheme": self.scheme,
            "per_class": {
                label.slug: {"correct": correct, "total": total}
                for label, (correct, total) in self.per_class.items()
            },
            "overall": {
                "correct": self.correct,
                "total": self.total,
                "accuracy": self.accuracy if self.total else None,
            },
            "confusion": self.confusion.tolist(),
        }


def _check_level_scheme(level, scheme):
    validate_parameter_constraints(
        {"level": [StrOptions(set(LEVELS))], "scheme": [StrOptions(set(SCHEMES))]},
        {"level": level, "scheme": scheme},
        caller_name="evaluate_run",
    )


def evaluate_run(predictions, ground_truth, level, scheme="three_class"):
    """Score predictions against ground truth.

    Parameters
    ----------
    predictions : dict
        Item key to predicted class.

    ground_truth : dict
        Item key to true class, with exactly the keys of ``predictions``.

    level : {"patch", "region", "slide"}
        Level recorded in the report.

    scheme : {"three_class", "binary"}, default="three_class"
        Score the classes or their carcinoma / non-carcinoma projection.

    Returns
    -------
    report : MetricsReport

    Raises
    ------
    ValidationError
        If the key sets differ; the message lists the missing keys.
    """
    _check_level_scheme(level, scheme)
    missing_truth = sorted(set(predictions) - set(ground_truth))
    missing_pred = sorted(set(ground_truth) - set(predictions))
    if missing_truth or missing_pred:
        raise ValidationError(
            "prediction and truth keys differ; without truth: %s;"
            " without prediction: %s"
            % (missing_truth[:10], missing_pred[:10]),
            field="keys",
        )
    keys = sorted(predictions)
    y_true = [resolve_label(ground_truth[key]) for key in keys]
    y_pred = [resolve_label(predictions[key]) for key in keys]
    labels = tuple(ClassLabel)
    if scheme == "binary":
        y_true = [to_binary(label) for label in y_true]
        y_pred = [to_binary(label) for label in y_pred]
        labels = tuple(BinaryLabel)
    if keys:
        confusion = confusion_matrix(
            [int(v) for v in y_true],
            [int(v) for v in y_pred],
            labels=[int(v) for v in labels],
        )
    else:
        confusion = np.zeros((len(labels), len(labels)), dtype=np.int64)
    report = MetricsReport(level, scheme, labels, confusion.astype(np.int64))
    logger.debug("%s/%s: %d of %d correct", level, scheme, report.correct, report.total)
    return report


def project_binary(report):
    """Binary report derived from a three-class report.

    Examples
    --------
    >>> from HistoML.metrics import evaluate_run, project_binary
    >>> predictions = {"a": "dcis", "b": "idc"}
    >>> report = evaluate_run(predictions, {"a": "idc", "b": "idc"}, "slide")
    >>> project_binary(report).correct
    2
    """
    if report.scheme != "three_class":
        raise ValidationError(
            "only three-class reports can be projected", field="scheme"
        )
    mapping = np.array([int(to_binary(label)) for label in report.labels])
    projection = np.zeros((len(mapping), len(BinaryLabel)), dtype=np.int64)
    projection[np.arange(len(mapping)), mapping] = 1
    confusion = projection.T @ report.confusion @ projection
    return MetricsReport(report.level, "binary", tuple(BinaryLabel), confusion)


@dataclass(frozen=True)
class ErrorAnalysis:
    """Slide-level misses and over-calls."""

    false_negatives: tuple
    false_alarms: tuple
    subtype_errors: tuple

    def to_json(self):
        return {
            "false_negatives": list(self.false_negatives),
            "false_alarms": list(self.false_alarms),
            "subtype_errors": list(self.subtype_errors),
        }


def error_analysis(predictions, ground_truth):
    """Group misclassified items by kind.

    False negatives are carcinoma items called NonCarcinoma, false alarms
    NonCarcinoma items called carcinoma and subtype errors DCIS / IDC
    confusions.
    """
    false_negatives, false_alarms, subtype = [], [], []
    for key in sorted(ground_truth):
        if key not in predictions:
            raise ValidationError("no prediction for %r" % (key,), field="keys")
        truth, pred = resolve_label(ground_truth[key]), resolve_label(predictions[key])
        if truth is pred:
            continue
        if pred is ClassLabel.NonCarcinoma:
            false_negatives.append(key)
        elif truth is ClassLabel.NonCarcinoma:
            false_alarms.append(key)
        else:
            subtype.append(key)
    return ErrorAnalysis(tuple(false_negatives), tuple(false_alarms), tuple(subtype))
