"""
Patch inference backends.

A backend answers two questions about a patch: the probability that it
contains lesion tissue (detection) and the class distribution over
NonCarcinoma / DCIS / IDC (classification), optionally with the feature vector
and spatial feature maps behind the decision.
"""

# Authors: HistoML developers
# License: BSD 3 clause

import math
from abc import ABCMeta, abstractmethod
from dataclasses import dataclass, field
from numbers import Integral

import numpy as np
from scipy.special import softmax
from skimage.measure import block_reduce
from skimage.transform import resize
from sklearn.base import BaseEstimator
from sklearn.utils._param_validation import Interval, validate_parameter_constraints

from .._labels import ClassLabel, argmax_severity
from ..exceptions import InferenceError, ValidationError
from ._features import PatchFeatureExtractor, ref_key

BACKGROUND_MIN = 230
SIGNATURE_MARGIN = 40
PROBA_TOLERANCE = 1e-6


def background_mask(pixels):
    """Pixels whose three channels are all >= 230."""
    return np.all(pixels >= BACKGROUND_MIN, axis=-1)


def signature_masks(pixels):
    """Boolean ``(3, H, W)`` stack: pixels dominated by the class channel.

    A pixel carries the signature of class ``c`` when its dominant channel
    (G for NonCarcinoma, B for DCIS, R for IDC) exceeds both other channels by
    at least 40.
    """
    rgb = pixels.astype(np.int16)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    m = SIGNATURE_MARGIN
    return np.stack(
        [
            (g >= r + m) & (g >= b + m),
            (b >= r + m) & (b >= g + m),
            (r >= g + m) & (r >= b + m),
        ]
    )


def signature_maps(pixels, grid=8):
    """Signature indicator maps average-pooled to a ``grid x grid`` map."""
    masks = signature_masks(pixels).astype(np.float64)
    height, width = masks.shape[1:]
    if height % grid == 0 and width % grid == 0:
        return block_reduce(masks, (1, height // grid, width // grid), np.mean)
    return resize(masks, (3, grid, grid), order=1, anti_aliasing=True, mode="edge")


@dataclass(frozen=True)
class DetectionResult:
    probability: float


@dataclass(frozen=True)
class ClassificationResult:
    """Class distribution of a patch, with optional supporting evidence."""

    probs: np.ndarray
    features: np.ndarray = field(default=None, repr=False)
    feature_maps: np.ndarray = field(default=None, repr=False)

    @property
    def argmax(self):
        return argmax_severity(self.probs)


class PatchBackend(BaseEstimator, metaclass=ABCMeta):
    """Base class of patch backends.

    Backends hold no mutable state after construction and can be shared by
    concurrent scans.
    """

    @abstractmethod
    def detect(self, patch):
        """Probability in [0, 1] that ``patch`` holds lesion tissue."""

    @abstractmethod
    def classify(self, patch):
        """:class:`ClassificationResult` of ``patch``."""

    def _check_params(self):
        validate_parameter_constraints(
            self._parameter_constraints,
            self.get_params(deep=False),
            caller_name=type(self).__name__,
        )


class SyntheticBackend(PatchBackend):
    """Rule-based backend reading the synthetic colour signatures.

    Detection is the fraction of non-background pixels. Classification is the
    normalised count of signature pixels of each class among non-background
    pixels, uniform when there is none.

    Parameters
    ----------
    map_grid : int, default=8
        Side of the pooled signature maps returned as feature maps.

    Examples
    --------
    >>> import numpy as np
    >>> from HistoML.slide import Patch
    >>> from HistoML.inference import SyntheticBackend
    >>> pixels = np.full((4, 4, 3), 255, dtype=np.uint8)
    >>> pixels[:, :2] = (200, 40, 40)
    >>> backend = SyntheticBackend()
    >>> backend.detect(Patch("s", 0, 0, 0, 4, pixels))
    0.5
    >>> backend.classify(Patch("s", 0, 0, 0, 4, pixels)).probs.tolist()
    [0.0, 0.0, 1.0]
    """

    _parameter_constraints = {"map_grid": [Interval(Integral, 1, None, closed="left")]}

    def __init__(self, map_grid=8):
        self.map_grid = map_grid

    def detect(self, patch):
        return float(1.0 - background_mask(patch.pixels).mean())

    def classify(self, patch):
        self._check_params()
        pixels = patch.pixels
        counts = signature_masks(pixels).reshape(3, -1).sum(axis=1).astype(np.float64)
        total = counts.sum()
        if total == 0:
            probs = np.full(len(ClassLabel), 1.0 / len(ClassLabel))
        else:
            probs = counts / total
        return ClassificationResult(
            probs=probs, feature_maps=signature_maps(pixels, self.map_grid)
        )


class LinearBackend(PatchBackend):
    """Linear model over the hand-crafted patch descriptor.

    Classification is ``softmax(W^T a + b)`` with ``a`` the
    :class:`PatchFeatureExtractor` vector; detection and feature maps are the
    same as :class:`SyntheticBackend`.

    Parameters
    ----------
    model : LinearModel
        Weights over ``extractor.n_features_out`` features.

    n_bins : int, default=8
        Histogram bins of the extractor.

    map_grid : int, default=8
        Side of the pooled signature maps.
    """

    _parameter_constraints = {
        "model": [object],
        "n_bins": [Interval(Integral, 1, None, closed="left")],
        "map_grid": [Interval(Integral, 1, None, closed="left")],
    }

    def __init__(self, model=None, n_bins=8, map_grid=8):
        self.model = model
        self.n_bins = n_bins
        self.map_grid = map_grid

    def detect(self, patch):
        return float(1.0 - background_mask(patch.pixels).mean())

    def classify(self, patch):
        self._check_params()
        if self.model is None:
            raise ValidationError("LinearBackend needs a model", field="model")
        extractor = PatchFeatureExtractor(n_bins=self.n_bins)
        if self.model.n_features != extractor.n_features_out:
            raise ValidationError(
                "model has %d features, the extractor produces %d"
                % (self.model.n_features, extractor.n_features_out),
                field="model",
            )
        features = extractor.fit_transform(patch.pixels[np.newaxis])[0]
        scores = features @ self.model.w + self.model.b
        return ClassificationResult(
            probs=softmax(scores),
            features=features,
            feature_maps=signature_maps(patch.pixels, self.map_grid),
        )


class FeaturePlaybackBackend(PatchBackend):
    """Replays precomputed features of an external model.

    The feature vector of a patch is looked up in ``table`` by its reference
    ``(slide_id, level, x, y, size)`` and scored by ``model`` with a softmax.
    Detection is delegated to ``detector``.

    Parameters
    ----------
    table : FeatureTable
        Precomputed activations with patch references.

    model : LinearModel
        Scoring layer over the table's features.

    feature_maps : ndarray of shape (n_samples, K, H', W'), default=None
        Precomputed spatial maps aligned with the table rows.

    detector : PatchBackend, default=None
        Detection backend; :class:`SyntheticBackend` when None.
    """

    _parameter_constraints = {
        "table": [object],
        "model": [object],
        "feature_maps": ["array-like", None],
        "detector": [PatchBackend, None],
    }

    def __init__(self, table=None, model=None, feature_maps=None, detector=None):
        self.table = table
        self.model = model
        self.feature_maps = feature_maps
        self.detector = detector

    def detect(self, patch):
        detector = SyntheticBackend() if self.detector is None else self.detector
        return detector.detect(patch)

    def classify(self, patch):
        self._check_params()
        if self.table is None or self.table.patch_refs is None:
            raise ValidationError(
                "playback needs a feature table with patch references", field="table"
            )
        if self.model is None or self.model.n_features != self.table.n_features:
            raise ValidationError(
                "playback model must match the table's feature count", field="model"
            )
        row = self.table.ref_index.get(ref_key(patch.ref()))
        if row is None:
            raise InferenceError("no precomputed features for this patch")
        features = self.table.activations[row].astype(np.float64)
        maps = None if self.feature_maps is None else np.asarray(self.feature_maps)[row]
        return ClassificationResult(
            probs=softmax(features @ self.model.w + self.model.b),
            features=features,
            feature_maps=maps,
        )


def detect_prob(backend, patch):
    """Run detection on ``patch``, checking the backend contract.

    Raises
    ------
    InferenceError
        If the backend fails or returns a value outside [0, 1]; the error
        carries the patch reference.
    """
    try:
        probability = float(backend.detect(patch))
    except InferenceError as exc:
        exc.patch = exc.patch or patch.ref()
        raise
    except ValidationError:
        raise
    except Exception as exc:
        raise InferenceError(
            "detection failed: %s" % exc, patch=patch.ref()
        ) from exc
    if not (math.isfinite(probability) and 0.0 <= probability <= 1.0):
        raise InferenceError(
            "detection probability %r outside [0, 1]" % probability, patch=patch.ref()
        )
    return DetectionResult(probability)


def classify_patch(backend, patch):
    """Run classification on ``patch``, checking the backend contract.

    Raises
    ------
    InferenceError
        If the backend fails or its probabilities are not a distribution over
        the three classes; the error carries the patch reference.
    """
    try:
        result = backend.classify(patch)
    except InferenceError as exc:
        exc.patch = exc.patch or patch.ref()
        raise
    except ValidationError:
        raise
    except Exception as exc:
        raise InferenceError(
            "classification failed: %s" % exc, patch=patch.ref()
        ) from exc
    probs = np.asarray(result.probs, dtype=np.float64)
    if (
        probs.shape != (len(ClassLabel),)
        or not np.isfinite(probs).all()
        or (probs < 0).any()
        or abs(probs.sum() - 1.0) > PROBA_TOLERANCE
    ):
        raise InferenceError(
            "class probabilities %r are not a distribution" % (probs.tolist(),),
            patch=patch.ref(),
        )
    return result
