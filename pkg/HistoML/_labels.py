"""
Shared vocabulary of the diagnosis pipeline: lesion classes, their severity
order, the carcinoma/non-carcinoma projection and physical calibration.
"""

# Authors: HistoML developers
# License: BSD 3 clause

import math
from dataclasses import dataclass
from enum import IntEnum

from .exceptions import ValidationError

__all__ = [
    "ClassLabel",
    "BinaryLabel",
    "PhysicalCalibration",
    "to_binary",
    "max_severity",
    "resolve_label",
    "argmax_severity",
]


class ClassLabel(IntEnum):
    """Lesion class, ordered by severity.

    The integer value is the severity rank, so ``max`` over labels is the most
    severe one.

    Examples
    --------
    >>> from HistoML import ClassLabel
    >>> ClassLabel.DCIS < ClassLabel.IDC
    True
    >>> ClassLabel.from_name("idc")
    <ClassLabel.IDC: 2>
    """

    NonCarcinoma = 0
    DCIS = 1
    IDC = 2

    @property
    def slug(self):
        """Serialised name used in every JSON output."""
        return _SLUGS[self]

    @classmethod
    def from_name(cls, name):
        try:
            return _FROM_SLUG[name]
        except KeyError:
            raise ValidationError(
                "Unknown class label %r. Valid choices are: %s"
                % (name, ", ".join(_FROM_SLUG)),
                field="label",
            ) from None


class BinaryLabel(IntEnum):
    """Carcinoma / non-carcinoma projection of :class:`ClassLabel`."""

    NonCarcinoma = 0
    Carcinoma = 1

    @property
    def slug(self):
        return "carcinoma" if self is BinaryLabel.Carcinoma else "non_carcinoma"


_SLUGS = {
    ClassLabel.NonCarcinoma: "non_carcinoma",
    ClassLabel.DCIS: "dcis",
    ClassLabel.IDC: "idc",
}
_FROM_SLUG = {slug: label for label, slug in _SLUGS.items()}


@dataclass(frozen=True)
class PhysicalCalibration:
    """Microns per pixel of a slide at level 0.

    Parameters
    ----------
    mpp_x : float
        Horizontal pixel pitch in micrometres, strictly positive.

    mpp_y : float
        Vertical pixel pitch in micrometres, strictly positive.
    """

    mpp_x: float
    mpp_y: float

    def __post_init__(self):
        for name in ("mpp_x", "mpp_y"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(
                    "%s must be strictly positive and finite, got %r" % (name, value),
                    field=name,
                )

    def scaled(self, downsample):
        return PhysicalCalibration(self.mpp_x * downsample, self.mpp_y * downsample)

    @property
    def pixel_area_mm2(self):
        return self.mpp_x * self.mpp_y / 1e6


def resolve_label(value):
    """Coerce a label given as enum, integer or serialised name."""
    if isinstance(value, ClassLabel):
        return value
    if isinstance(value, str):
        return ClassLabel.from_name(value)
    try:
        return ClassLabel(int(value))
    except ValueError:
        raise ValidationError("Unknown class label %r" % (value,), field="label")


def to_binary(label):
    """Project a three-class label onto carcinoma / non-carcinoma.

    Parameters
    ----------
    label : ClassLabel
        Lesion class.

    Returns
    -------
    binary : BinaryLabel
        ``Carcinoma`` for DCIS and IDC, ``NonCarcinoma`` otherwise.

    Examples
    --------
    >>> from HistoML import ClassLabel, to_binary
    >>> to_binary(ClassLabel.DCIS).name
    'Carcinoma'
    >>> to_binary(ClassLabel.NonCarcinoma).name
    'NonCarcinoma'
    """
    label = resolve_label(label)
    if label is ClassLabel.NonCarcinoma:
        return BinaryLabel.NonCarcinoma
    return BinaryLabel.Carcinoma


def max_severity(labels):
    """Return the most severe label of a non-empty collection.

    Parameters
    ----------
    labels : iterable of ClassLabel
        Labels to aggregate.

    Returns
    -------
    label : ClassLabel
        Maximum under the order NonCarcinoma < DCIS < IDC.

    Raises
    ------
    ValidationError
        If ``labels`` is empty.

    Examples
    --------
    >>> from HistoML import ClassLabel, max_severity
    >>> max_severity([ClassLabel.DCIS, ClassLabel.IDC, ClassLabel.NonCarcinoma])
    <ClassLabel.IDC: 2>
    """
    labels = [resolve_label(label) for label in labels]
    if not labels:
        raise ValidationError("max_severity needs at least one label", field="labels")
    return max(labels)


def argmax_severity(values):
    """Index of the largest value, exact ties going to the most severe class.

    Examples
    --------
    >>> from HistoML._labels import argmax_severity
    >>> argmax_severity([1, 1, 1])
    <ClassLabel.IDC: 2>
    >>> argmax_severity([0.081, -0.051, -0.045])
    <ClassLabel.NonCarcinoma: 0>
    """
    values = list(values)
    if len(values) != len(ClassLabel):
        raise ValidationError(
            "expected %d class scores, got %d" % (len(ClassLabel), len(values)),
            field="scores",
        )
    best = max(values)
    return ClassLabel(max(i for i, value in enumerate(values) if value == best))
