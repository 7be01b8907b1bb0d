"""Class-balanced splitting of slides into cross-validation folds."""

# Authors: HistoML developers
# License: BSD 3 clause

from dataclasses import dataclass
from numbers import Integral

import numpy as np
from sklearn.model_selection import BaseCrossValidator
from sklearn.utils import check_random_state
from sklearn.utils._param_validation import Interval, validate_parameter_constraints

from .._labels import resolve_label
from ..exceptions import ValidationError
from ._report import evaluate_run


def _deal(y, n_splits, rng):
    """Fold index of every sample.

    Within each class the members are shuffled and dealt round-robin; the
    dealing position carries over from one class to the next so that total
    fold sizes stay balanced as well.
    """
    fold_of = np.empty(len(y), dtype=np.int64)
    offset = 0
    for value in np.unique(y):
        members = np.flatnonzero(y == value)
        members = members[rng.permutation(len(members))]
        fold_of[members] = (offset + np.arange(len(members))) % n_splits
        offset += len(members)
    return fold_of


class RoundRobinStratifiedKFold(BaseCrossValidator):
    """Stratified K-fold dealing each class round-robin over the folds.

    Per-class fold sizes differ by at most one, also when a class has fewer
    members than folds.

    Parameters
    ----------
    n_splits : int, default=5
        Number of folds, at least 2.

    random_state : int, RandomState instance or None, default=None
        Controls the shuffling within each class.

    Examples
    --------
    >>> import numpy as np
    >>> from HistoML.metrics import RoundRobinStratifiedKFold
    >>> y = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    >>> cv = RoundRobinStratifiedKFold(n_splits=4, random_state=0)
    >>> [np.bincount(y[test]).tolist() for _, test in cv.split(y, y)]
    [[1, 1], [1, 1], [1, 1], [1, 1]]
    """

    def __init__(self, n_splits=5, *, random_state=None):
        self.n_splits = n_splits
        self.random_state = random_state

    def get_n_splits(self, X=None, y=None, groups=None):
        return self.n_splits

    def _iter_test_indices(self, X=None, y=None, groups=None):
        validate_parameter_constraints(
            {"n_splits": [Interval(Integral, 2, None, closed="left")]},
            {"n_splits": self.n_splits},
            caller_name=type(self).__name__,
        )
        if y is None:
            raise ValueError("The 'y' parameter should not be None.")
        y = np.asarray(y)
        if self.n_splits > len(y):
            raise ValueError(
                "Cannot have number of splits n_splits=%d greater than the number "
                "of samples: n_samples=%d." % (self.n_splits, len(y))
            )
        fold_of = _deal(y, self.n_splits, check_random_state(self.random_state))
        for fold in range(self.n_splits):
            yield np.flatnonzero(fold_of == fold)


@dataclass(frozen=True)
class FoldPlan:
    """Slides of every fold, each fold sorted by slide id."""

    k: int
    seed: int
    folds: tuple

    def fold_of(self, slide_id):
        for index, fold in enumerate(self.folds):
            if slide_id in fold:
                return index
        raise ValidationError("slide %r is in no fold" % (slide_id,), field="slide_id")

    def to_json(self):
        return {"k": self.k, "seed": self.seed, "folds": [list(f) for f in self.folds]}

    @classmethod
    def from_json(cls, doc):
        try:
            return cls(
                k=int(doc["k"]),
                seed=int(doc["seed"]),
                folds=tuple(tuple(str(s) for s in fold) for fold in doc["folds"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError("malformed fold plan: %r" % exc) from exc


def stratified_kfold(slide_labels, k=5, seed=0):
    """Split slides into ``k`` folds with every class evenly spread.

    Parameters
    ----------
    slide_labels : dict
        Slide id to class.

    k : int, default=5
        Number of folds, at least 2 and at most the number of slides.

    seed : int, default=0
        Shuffling seed; 64-bit values are accepted.

    Returns
    -------
    plan : FoldPlan

    Examples
    --------
    >>> from HistoML.metrics import stratified_kfold
    >>> labels = {"s%d" % i: "idc" for i in range(7)}
    >>> sorted(len(fold) for fold in stratified_kfold(labels, 5).folds)
    [1, 1, 1, 2, 2]
    """
    validate_parameter_constraints(
        {"k": [Interval(Integral, 2, None, closed="left")]},
        {"k": k},
        caller_name="stratified_kfold",
    )
    slide_ids = sorted(slide_labels)
    if k > len(slide_ids):
        raise ValidationError(
            "cannot split %d slides into %d folds" % (len(slide_ids), k), field="k"
        )
    y = np.array([int(resolve_label(slide_labels[s])) for s in slide_ids])
    fold_of = _deal(y, k, np.random.default_rng(seed))
    folds = tuple(
        tuple(s for s, f in zip(slide_ids, fold_of) if f == fold) for fold in range(k)
    )
    return FoldPlan(k=k, seed=seed, folds=folds)


def _slide_of(key):
    return str(key).split("/", 1)[0]


def evaluate_folds(
    predictions, ground_truth, plan, level, scheme="three_class", key_to_slide=None
):
    """Score every fold separately and pooled.

    Parameters
    ----------
    predictions, ground_truth : dict
        Item key to class, as for :func:`evaluate_run`.

    plan : FoldPlan
        Folds of slide ids.

    level, scheme : str
        See :func:`evaluate_run`.

    key_to_slide : callable, default=None
        Maps an item key to its slide id; by default the key up to the first
        ``/``.

    Returns
    -------
    fold_reports : list of MetricsReport
        One report per fold.

    pooled : MetricsReport
        Every item scored once, by the fold of its slide.
    """
    key_to_slide = key_to_slide or _slide_of
    fold_reports = []
    for fold in plan.folds:
        members = set(fold)
        keys = [key for key in ground_truth if key_to_slide(key) in members]
        fold_reports.append(
            evaluate_run(
                {key: predictions[key] for key in keys if key in predictions},
                {key: ground_truth[key] for key in keys},
                level,
                scheme,
            )
        )
    pooled = evaluate_run(predictions, ground_truth, level, scheme)
    return fold_reports, pooled
