"""
Linear scoring layer over patch features: the weights ``W`` (features x
classes) and bias ``b`` that turn a feature vector into class scores.
"""

# Authors: HistoML developers
# License: BSD 3 clause

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.linear_model import LogisticRegression

from .._labels import ClassLabel, argmax_severity
from ..exceptions import SlideFormatError, ValidationError

CLASS_NAMES = tuple(label.slug for label in ClassLabel)


@dataclass(frozen=True)
class LinearModel:
    """Per-class feature weights.

    Parameters
    ----------
    w : ndarray of shape (n_features, 3)
        Column ``c`` holds the weight of every feature for class ``c``.

    b : ndarray of shape (3,)
        Class biases.

    class_names : tuple of str, default=("non_carcinoma", "dcis", "idc")
        Names of the score columns.

    spatial_w : ndarray of shape (n_maps, 3), default=None
        Weights applied to spatial feature maps by class activation mapping.
        When absent, ``w`` is used and the maps must have ``n_features``
        channels.
    """

    w: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    class_names: tuple = CLASS_NAMES
    spatial_w: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] != len(ClassLabel):
            raise ValidationError(
                "w must have shape (n_features, 3), got %r" % (w.shape,), field="w"
            )
        if b.shape != (len(ClassLabel),):
            raise ValidationError(
                "b must have shape (3,), got %r" % (b.shape,), field="b"
            )
        if len(self.class_names) != len(ClassLabel):
            raise ValidationError(
                "class_names must list 3 classes", field="class_names"
            )
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValidationError("model weights must be finite", field="w")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "class_names", tuple(self.class_names))
        if self.spatial_w is not None:
            spatial_w = np.asarray(self.spatial_w, dtype=np.float64)
            if spatial_w.ndim != 2 or spatial_w.shape[1] != len(ClassLabel):
                raise ValidationError(
                    "spatial_w must have shape (n_maps, 3)", field="spatial_w"
                )
            if not np.isfinite(spatial_w).all():
                raise ValidationError(
                    "spatial weights must be finite", field="spatial_w"
                )
            object.__setattr__(self, "spatial_w", spatial_w)

    @property
    def n_features(self):
        return self.w.shape[0]

    def spatial_weights(self, n_maps):
        """Weights for ``n_maps`` spatial channels, shape ``(n_maps, 3)``."""
        weights = self.w if self.spatial_w is None else self.spatial_w
        if weights.shape[0] != n_maps:
            raise ValidationError(
                "feature maps have %d channels but the model has %d spatial weights"
                % (n_maps, weights.shape[0]),
                field="feature_maps",
            )
        return weights

    def to_json(self):
        doc = {
            "class_names": list(self.class_names),
            "f": self.n_features,
            "w": self.w.tolist(),
            "b": self.b.tolist(),
        }
        if self.spatial_w is not None:
            doc["spatial_w"] = self.spatial_w.tolist()
        return doc


def linear_score(a, model):
    """Class scores ``W^T a + b`` and the winning class.

    Parameters
    ----------
    a : array-like of shape (n_features,)
        Feature vector.

    model : LinearModel
        Scoring layer.

    Returns
    -------
    scores : ndarray of shape (3,)
        Raw class scores.

    label : ClassLabel
        Argmax of ``scores``; exact ties go to the most severe class.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (model.n_features,):
        raise ValidationError(
            "feature vector has shape %r, model expects (%d,)"
            % (a.shape, model.n_features),
            field="a",
        )
    scores = a @ model.w + model.b
    return scores, argmax_severity(scores)


def save_linear_model(model, path):
    Path(path).write_text(json.dumps(model.to_json(), indent=2), encoding="utf-8")


def load_linear_model(path):
    """Read a ``model.json`` file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SlideFormatError("%s not found" % path) from None
    except (OSError, json.JSONDecodeError) as exc:
        raise SlideFormatError("cannot parse %s: %s" % (path, exc)) from exc
    try:
        model = LinearModel(
            w=doc["w"],
            b=doc["b"],
            class_names=doc.get("class_names", CLASS_NAMES),
            spatial_w=doc.get("spatial_w"),
        )
    except ValidationError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SlideFormatError("malformed model %s: %r" % (path, exc)) from exc
    if int(doc.get("f", model.n_features)) != model.n_features:
        raise SlideFormatError(
            "%s declares f=%s but holds %d weight rows"
            % (path, doc["f"], model.n_features),
            field="f",
        )
    return model


def fit_linear_model(table, *, C=1.0, max_iter=1000, spatial_w=None):
    """Fit a multinomial logistic regression on a labelled feature table.

    Parameters
    ----------
    table : FeatureTable
        Activations with labels covering all three classes.

    C : float, default=1.0
        Inverse regularisation strength.

    max_iter : int, default=1000
        Solver iterations.

    spatial_w : ndarray of shape (n_maps, 3), default=None
        Spatial weights to attach to the model for activation mapping.

    Returns
    -------
    model : LinearModel
    """
    if table.labels is None:
        raise ValidationError("fitting a model needs a labelled table", field="labels")
    y = np.array([int(label) for label in table.labels])
    if len(np.unique(y)) != len(ClassLabel):
        raise ValidationError(
            "fitting a model needs patches of all three classes", field="labels"
        )
    clf = LogisticRegression(C=C, max_iter=max_iter)
    clf.fit(table.activations.astype(np.float64), y)
    return LinearModel(w=clf.coef_.T, b=clf.intercept_, spatial_w=spatial_w)
